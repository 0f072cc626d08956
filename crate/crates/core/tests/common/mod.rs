#![allow(dead_code)]

use elastoph::{ElasticElement, IntegratorParams, MechanicalSystem, State};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

pub const GRAVITY: f64 = 9.81;

pub fn pendulum() -> MechanicalSystem {
    MechanicalSystem::new(
        vec![1.0],
        vec![ElasticElement::anchored(0, 1.0e4, 1.0).unwrap()],
        Vector3::new(0.0, 0.0, -GRAVITY),
    )
    .unwrap()
}

pub fn pendulum_initial() -> State {
    State::new(
        DVector::from_vec(vec![1.1, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 1.0, 1.0]),
        DVector::from_vec(vec![1.21]),
    )
}

pub fn pendulum_params() -> IntegratorParams {
    IntegratorParams::new(1e-2, 0.0, 4.0).unwrap()
}

/// Parameters of a triangle of three masses joined by three springs.
#[derive(Debug, Clone)]
pub struct TriangleParams {
    pub masses: [f64; 3],
    pub stiffness: [f64; 3],
    pub rest_length: [f64; 3],
    pub gravity: [f64; 3],
}

impl TriangleParams {
    pub fn build(&self) -> MechanicalSystem {
        let pairs = [(0, 1), (1, 2), (0, 2)];
        let elements = pairs
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                ElasticElement::spring(a, b, self.stiffness[i], self.rest_length[i]).unwrap()
            })
            .collect();
        MechanicalSystem::new(self.masses.to_vec(), elements, Vector3::from(self.gravity)).unwrap()
    }
}

pub fn triangle() -> impl Strategy<Value = TriangleParams> {
    (
        prop::array::uniform3(0.5..2.0f64),
        prop::array::uniform3(10.0..1.0e4f64),
        prop::array::uniform3(0.5..2.0f64),
        prop::array::uniform3(-10.0..10.0f64),
    )
        .prop_map(|(masses, stiffness, rest_length, gravity)| TriangleParams {
            masses,
            stiffness,
            rest_length,
            gravity,
        })
}

pub fn vec_in(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(lo..hi, len).prop_map(DVector::from_vec)
}

/// Arbitrary state of a triangle: strains are independent of positions.
pub fn free_state() -> impl Strategy<Value = State> {
    (vec_in(9, -2.0, 2.0), vec_in(9, -3.0, 3.0), vec_in(3, 0.3, 3.0))
        .prop_map(|(q, v, c)| State::new(q, v, c))
}

/// Positions of a triangle whose vertices are at least `0.3` apart.
pub fn separated_positions() -> impl Strategy<Value = DVector<f64>> {
    vec_in(9, -1.5, 1.5).prop_filter("points too close", |q| {
        let p = |k: usize| Vector3::new(q[3 * k], q[3 * k + 1], q[3 * k + 2]);
        [(0, 1), (1, 2), (0, 2)]
            .iter()
            .all(|&(a, b)| (p(a) - p(b)).norm() > 0.3)
    })
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}
