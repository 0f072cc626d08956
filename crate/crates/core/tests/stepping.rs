mod common;

use std::f64::consts::PI;

use common::*;
use elastoph::integrator::{midpoint_efforts, propagate, solve_step_with};
use elastoph::{
    integrate, ElasticElement, IntegratorParams, JacobianMode, MechanicalSystem, Scheme, State,
    ViscousDamping, ZeroInput,
};
use nalgebra::{DVector, Rotation3, Vector3};
use proptest::prelude::*;

/// Fixed-point iteration `x1 = x0 + h E^-1 J(q_mid) z_mid(x0, x1)`.
fn picard_step(sys: &MechanicalSystem, x0: &State, h: f64) -> State {
    let params = IntegratorParams::new(h, 0.0, h).unwrap();
    let e_inv = sys.descriptor_matrix().try_inverse().unwrap();
    let mut x1 = x0.clone();
    for _ in 0..500 {
        let z = midpoint_efforts(sys, x0, &x1, Scheme::DiscreteGradient, &params.dgrad).unwrap();
        let j = sys.structure_matrix(&((&x0.q + &x1.q) * 0.5)).unwrap();
        let next = x0.to_vector() + &e_inv * (j * z) * h;
        let next = State::from_vector(sys.n_points(), sys.n_elements(), &next).unwrap();
        let done = (next.to_vector() - x1.to_vector()).amax() < 1e-15;
        x1 = next;
        if done {
            break;
        }
    }
    x1
}

fn rotate(x: &State, angle: f64) -> State {
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
    let turn = |w: &DVector<f64>| {
        let mut out = w.clone();
        for k in 0..w.len() / 3 {
            let p = r * Vector3::new(w[3 * k], w[3 * k + 1], w[3 * k + 2]);
            out.fixed_rows_mut::<3>(3 * k).copy_from(&p);
        }
        out
    };
    State::new(turn(&x.q), turn(&x.v), x.c.clone())
}

fn vertical_triangle(tri: &TriangleParams) -> MechanicalSystem {
    let mut tri = tri.clone();
    tri.gravity = [0.0, 0.0, -GRAVITY];
    tri.stiffness = tri.stiffness.map(|k| k.min(500.0));
    tri.build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn newton_matches_fixed_point_oracle(
        tri in triangle(),
        q in separated_positions(),
        v in vec_in(9, -1.0, 1.0),
    ) {
        let sys = vertical_triangle(&tri);
        let x0 = sys.consistent_state(q, v).unwrap();
        let h = 1e-3;
        let params = IntegratorParams::new(h, 0.0, h).unwrap().with_newton_tol(1e-12);
        let newton = solve_step_with(&sys, &x0, 0.0, h, &params, &ZeroInput).unwrap().state;
        let oracle = picard_step(&sys, &x0, h);
        prop_assert!((newton.to_vector() - oracle.to_vector()).amax() < 1e-8);
    }

    #[test]
    fn steps_are_reversible(
        tri in triangle(),
        q in separated_positions(),
        v in vec_in(9, -1.0, 1.0),
    ) {
        let sys = vertical_triangle(&tri);
        let x0 = sys.consistent_state(q, v).unwrap();
        let h = 5e-3;
        let params = IntegratorParams::new(h, 0.0, h).unwrap().with_newton_tol(1e-12);
        let x1 = solve_step_with(&sys, &x0, 0.0, h, &params, &ZeroInput).unwrap().state;
        let back = solve_step_with(&sys, &x1, h, -h, &params, &ZeroInput).unwrap().state;
        prop_assert!((back.to_vector() - x0.to_vector()).amax() < 1e-8);
    }

    #[test]
    fn steps_commute_with_rotation_about_gravity(
        tri in triangle(),
        q in separated_positions(),
        v in vec_in(9, -1.0, 1.0),
        angle in 0.0..2.0 * PI,
    ) {
        let sys = vertical_triangle(&tri);
        let x0 = sys.consistent_state(q, v).unwrap();
        let params = IntegratorParams::new(5e-3, 0.0, 5e-3).unwrap().with_newton_tol(1e-12);
        let step = |x: &State| solve_step_with(&sys, x, 0.0, 5e-3, &params, &ZeroInput).unwrap().state;
        let a = rotate(&step(&x0), angle);
        let b = step(&rotate(&x0, angle));
        prop_assert!((a.to_vector() - b.to_vector()).amax() < 1e-8);
        let h0 = sys.hamiltonian(&x0).unwrap();
        let hr = sys.hamiltonian(&rotate(&x0, angle)).unwrap();
        prop_assert!((h0 - hr).abs() <= 1e-12 * (1.0 + h0.abs()));
    }

    #[test]
    fn single_steps_conserve_energy_and_axial_momentum(
        tri in triangle(),
        q in separated_positions(),
        v in vec_in(9, -1.0, 1.0),
    ) {
        let sys = vertical_triangle(&tri);
        let x0 = sys.consistent_state(q, v).unwrap();
        let params = IntegratorParams::new(1e-2, 0.0, 1e-2).unwrap();
        let x1 = solve_step_with(&sys, &x0, 0.0, 1e-2, &params, &ZeroInput).unwrap().state;
        let h0 = sys.hamiltonian(&x0).unwrap();
        let h1 = sys.hamiltonian(&x1).unwrap();
        prop_assert!((h1 - h0).abs() < 1e-8);
        let l0 = sys.angular_momentum(&x0.q, &x0.v).unwrap();
        let l1 = sys.angular_momentum(&x1.q, &x1.v).unwrap();
        prop_assert!((l1.z - l0.z).abs() < 1e-8);
        let g = &x1.c - sys.strain_map(&x1.q).unwrap();
        prop_assert!(g.amax() < 1e-8);
    }
}

#[test]
fn quadratic_hamiltonian_reduces_to_implicit_midpoint() {
    let sys = MechanicalSystem::new(vec![1.0, 2.5], vec![], Vector3::new(0.3, -1.0, -9.81)).unwrap();
    let x0 = State::new(
        DVector::from_vec(vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.0]),
        DVector::from_vec(vec![1.0, -0.5, 0.25, 0.0, 3.0, -1.0]),
        DVector::zeros(0),
    );
    let dg = IntegratorParams::new(1e-2, 0.0, 1.0).unwrap();
    let mp = dg.with_scheme(Scheme::ImplicitMidpoint);
    let a = propagate(&sys, &x0, &dg, &ZeroInput).unwrap();
    let b = propagate(&sys, &x0, &mp, &ZeroInput).unwrap();
    assert!((a.to_vector() - b.to_vector()).amax() < 1e-12);
}

#[test]
fn analytic_and_finite_difference_jacobians_agree() {
    let sys = pendulum();
    let fd = IntegratorParams::new(1e-2, 0.0, 1.0).unwrap();
    let an = fd.with_jacobian_mode(JacobianMode::Analytic);
    let a = integrate(&sys, &pendulum_initial(), &fd, &ZeroInput).unwrap();
    let b = integrate(&sys, &pendulum_initial(), &an, &ZeroInput).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!((x.to_vector() - y.to_vector()).amax() < 1e-8);
    }
}

#[test]
fn viscous_damping_is_passive() {
    let sys = pendulum();
    let params = IntegratorParams::new(1e-2, 0.0, 4.0).unwrap();
    let traj = integrate(&sys, &pendulum_initial(), &params, &ViscousDamping { damping: 0.5 }).unwrap();
    for (n, w) in traj.diagnostics.windows(2).enumerate() {
        let dh = w[1].hamiltonian - w[0].hamiltonian;
        assert!(dh <= 1e-8, "step {n}: dH = {dh}");
        assert!(w[1].power_supplied <= 0.0);
        assert!((dh - w[1].power_supplied).abs() <= 1e-8, "step {n}");
    }
    let first = traj.diagnostics.first().unwrap().hamiltonian;
    let last = traj.diagnostics.last().unwrap().hamiltonian;
    assert!(last < first - 1.0);
}

/// Equilibrium strain of a hanging spring: `(k/2)(1 - 1/C) sqrt(C) = m g`.
fn hanging_strain(m: f64, k: f64) -> f64 {
    let f = |c: f64| 0.5 * k * (1.0 - 1.0 / c) * c.sqrt() - m * GRAVITY;
    let (mut lo, mut hi) = (1.0, 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn hanging_equilibrium_is_stationary() {
    for (m, k) in [(1.0, 1.0e4), (2.0, 50.0), (0.5, 10.0)] {
        let sys = MechanicalSystem::new(
            vec![m],
            vec![ElasticElement::anchored(0, k, 1.0).unwrap()],
            Vector3::new(0.0, 0.0, -GRAVITY),
        )
        .unwrap();
        let c = hanging_strain(m, k);
        let x0 = sys
            .consistent_state(DVector::from_vec(vec![0.0, 0.0, -c.sqrt()]), DVector::zeros(3))
            .unwrap();
        let params = IntegratorParams::new(1e-2, 0.0, 1.0).unwrap();
        let traj = integrate(&sys, &x0, &params, &ZeroInput).unwrap();
        assert_eq!(traj.len(), 101);
        for x in &traj.states {
            assert!((x.to_vector() - x0.to_vector()).amax() <= 1e-9, "m = {m}, k = {k}");
        }
    }
}

#[test]
fn discrete_gradient_beats_midpoint_on_the_pendulum() {
    let sys = pendulum();
    let dg = pendulum_params();
    let mp = dg.with_scheme(Scheme::ImplicitMidpoint);
    let max_dh = |p: &IntegratorParams| {
        let t = integrate(&sys, &pendulum_initial(), p, &ZeroInput).unwrap();
        t.diagnostics
            .windows(2)
            .map(|w| (w[1].hamiltonian - w[0].hamiltonian).abs())
            .fold(0.0, f64::max)
    };
    let (a, b) = (max_dh(&dg), max_dh(&mp));
    assert!(a < 1e-8);
    assert!(b >= 100.0 * a, "{b} vs {a}");
}
