//! Finite-dimensional hyperelastic mass-spring systems in port-Hamiltonian form.
//!
//! The state is `x = (q, v, C)`: stacked point positions, stacked point
//! velocities and one independent Cauchy-Green strain per elastic element.
//! All vectors are ordered point by point (`q = (q_1, q_2, ...)`, each
//! `q_k` in R^3) and all matrices follow the `(q, v, C)` block layout.
//!
//! The state equations read
//!
//! ```text
//! E xdot = J(q) z + B u,     E^T z = grad H(x),     y = B^T z
//!
//!     | I 0 0 |          |  0   I     0      |
//! E = | 0 M 0 |,  J(q) = | -I   0  -G(q)^T   |,  G(q) = d C~(q) / dq
//!     | 0 0 I |          |  0  G(q)   0      |
//! ```
//!
//! with efforts `z = (grad V_ext(q), v, S/2)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dgrad::{self, DGradParams, ScalarPotential};
use crate::error::{Error, Result};

/// A hyperelastic element with stored energy `(k l0 / 4) (C - ln C - 1)`.
///
/// The element acts on the relative vector `qbar = sum_j a_j q_j`, and its
/// Cauchy-Green strain is `qbar . qbar / l0^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticElement {
    stiffness: f64,
    rest_length: f64,
    coefficients: Vec<(usize, f64)>,
}

impl ElasticElement {
    pub fn new(stiffness: f64, rest_length: f64, coefficients: Vec<(usize, f64)>) -> Result<Self> {
        if !(stiffness.is_finite() && stiffness > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "element stiffness must be positive and finite, got {stiffness}"
            )));
        }
        if !(rest_length.is_finite() && rest_length > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "element rest length must be positive and finite, got {rest_length}"
            )));
        }
        if coefficients.iter().any(|(_, a)| !a.is_finite()) {
            return Err(Error::InvalidSystem(
                "element coefficients must be finite".into(),
            ));
        }
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefficients.len());
        for (point, a) in coefficients {
            match merged.iter_mut().find(|(p, _)| *p == point) {
                Some(entry) => entry.1 += a,
                None => merged.push((point, a)),
            }
        }
        merged.retain(|(_, a)| *a != 0.0);
        if merged.is_empty() {
            return Err(Error::InvalidSystem(
                "element needs at least one nonzero coefficient".into(),
            ));
        }
        merged.sort_by_key(|(p, _)| *p);
        Ok(Self {
            stiffness,
            rest_length,
            coefficients: merged,
        })
    }

    /// Two-endpoint spring, `qbar = q_first - q_second`.
    pub fn spring(first: usize, second: usize, stiffness: f64, rest_length: f64) -> Result<Self> {
        if first == second {
            return Err(Error::InvalidSystem(format!(
                "spring endpoints must differ, both are {first}"
            )));
        }
        Self::new(stiffness, rest_length, vec![(first, 1.0), (second, -1.0)])
    }

    /// Spring between a point and the fixed origin, `qbar = q_point`.
    pub fn anchored(point: usize, stiffness: f64, rest_length: f64) -> Result<Self> {
        Self::new(stiffness, rest_length, vec![(point, 1.0)])
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn rest_length(&self) -> f64 {
        self.rest_length
    }

    /// Sparse `(point, a)` pairs sorted by point index.
    pub fn coefficients(&self) -> &[(usize, f64)] {
        &self.coefficients
    }

    pub fn coefficient(&self, point: usize) -> f64 {
        self.coefficients
            .iter()
            .find(|(p, _)| *p == point)
            .map_or(0.0, |(_, a)| *a)
    }

    /// `sum_j a_j w_j` for any stacked 3-vector field (positions or velocities).
    pub fn combine(&self, stacked: &DVector<f64>) -> Vector3<f64> {
        self.coefficients
            .iter()
            .fold(Vector3::zeros(), |acc, &(p, a)| acc + a * point(stacked, p))
    }

    pub fn strain(&self, q: &DVector<f64>) -> f64 {
        let rel = self.combine(q);
        rel.dot(&rel) / (self.rest_length * self.rest_length)
    }

    fn scale(&self) -> f64 {
        0.25 * self.stiffness * self.rest_length
    }

    fn check_domain(&self, c: f64) -> Result<()> {
        if c > 0.0 && c.is_finite() {
            Ok(())
        } else {
            Err(Error::StrainDomain {
                element: usize::MAX,
                value: c,
            })
        }
    }
}

impl ScalarPotential for ElasticElement {
    fn value(&self, c: f64) -> Result<f64> {
        self.check_domain(c)?;
        Ok(self.scale() * (c - c.ln() - 1.0))
    }

    fn derivative(&self, c: f64) -> Result<f64> {
        self.check_domain(c)?;
        Ok(self.scale() * (1.0 - 1.0 / c))
    }

    fn second_derivative(&self, c: f64) -> Result<f64> {
        self.check_domain(c)?;
        Ok(self.scale() / (c * c))
    }

    /// `V(c1) - V(c0) = (k l0 / 4) (dc - ln(1 + dc / c0))`, free of cancellation
    /// for nearby arguments.
    fn increment(&self, c0: f64, c1: f64) -> Result<f64> {
        self.check_domain(c0)?;
        self.check_domain(c1)?;
        let dc = c1 - c0;
        Ok(self.scale() * (dc - (dc / c0).ln_1p()))
    }
}

/// Position-dependent potential energy acting on the points.
///
/// Only [`UniformGravity`] ships; the trait is the hook for other external
/// potentials. Conservation of the angular momentum component about a fixed
/// axis is only guaranteed for uniform fields.
pub trait ExternalPotential: fmt::Debug + Send + Sync {
    fn value(&self, masses: &[f64], q: &DVector<f64>) -> f64;

    fn gradient(&self, masses: &[f64], q: &DVector<f64>) -> DVector<f64>;

    /// Discrete gradient between two configurations. Defaults to the Gonzalez
    /// midpoint discrete gradient.
    fn discrete_gradient(
        &self,
        masses: &[f64],
        q0: &DVector<f64>,
        q1: &DVector<f64>,
        params: &DGradParams,
    ) -> DVector<f64> {
        dgrad::gonzalez_dg(
            |q| Ok(self.value(masses, q)),
            |q| Ok(self.gradient(masses, q)),
            q0,
            q1,
            params,
        )
        .expect("external potentials are defined everywhere")
    }

    /// Derivative of [`ExternalPotential::discrete_gradient`] with respect to
    /// `q1`, if known in closed form.
    fn discrete_gradient_jacobian(
        &self,
        _masses: &[f64],
        _q0: &DVector<f64>,
        _q1: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        None
    }

    /// The constant acceleration field, when the potential is `-sum m_k b . q_k`.
    fn uniform_field(&self) -> Option<Vector3<f64>> {
        None
    }
}

/// `V_ext(q) = -sum_k m_k b . q_k` for a constant acceleration `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGravity {
    pub acceleration: Vector3<f64>,
}

impl ExternalPotential for UniformGravity {
    fn value(&self, masses: &[f64], q: &DVector<f64>) -> f64 {
        -masses
            .iter()
            .enumerate()
            .map(|(k, m)| m * self.acceleration.dot(&point(q, k)))
            .sum::<f64>()
    }

    fn gradient(&self, masses: &[f64], _q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(3 * masses.len());
        for (k, m) in masses.iter().enumerate() {
            g.fixed_rows_mut::<3>(3 * k)
                .copy_from(&(-*m * self.acceleration));
        }
        g
    }

    // Linear potential: every discrete gradient coincides with the constant gradient.
    fn discrete_gradient(
        &self,
        masses: &[f64],
        q0: &DVector<f64>,
        _q1: &DVector<f64>,
        _params: &DGradParams,
    ) -> DVector<f64> {
        self.gradient(masses, q0)
    }

    fn discrete_gradient_jacobian(
        &self,
        masses: &[f64],
        _q0: &DVector<f64>,
        _q1: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(3 * masses.len(), 3 * masses.len()))
    }

    fn uniform_field(&self) -> Option<Vector3<f64>> {
        Some(self.acceleration)
    }
}

/// Immutable description of a mass-spring network.
#[derive(Debug, Clone)]
pub struct MechanicalSystem {
    masses: Vec<f64>,
    elements: Vec<ElasticElement>,
    external: Arc<dyn ExternalPotential>,
    /// Rows act on the 3N velocity equations.
    input_map: DMatrix<f64>,
}

impl MechanicalSystem {
    /// Builds a system under uniform gravity `b` with the identity input map
    /// into the velocity equations.
    pub fn new(masses: Vec<f64>, elements: Vec<ElasticElement>, gravity: Vector3<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidSystem("system needs at least one point".into()));
        }
        for (k, m) in masses.iter().enumerate() {
            if !(m.is_finite() && *m > 0.0) {
                return Err(Error::InvalidSystem(format!(
                    "mass of point {k} must be positive and finite, got {m}"
                )));
            }
        }
        for (i, el) in elements.iter().enumerate() {
            if let Some(&(p, _)) = el.coefficients.iter().find(|(p, _)| *p >= masses.len()) {
                return Err(Error::InvalidSystem(format!(
                    "element {i} references point {p}, but the system has {} points",
                    masses.len()
                )));
            }
        }
        if !gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidSystem("gravity must be finite".into()));
        }
        let n = 3 * masses.len();
        Ok(Self {
            masses,
            elements,
            external: Arc::new(UniformGravity {
                acceleration: gravity,
            }),
            input_map: DMatrix::identity(n, n),
        })
    }

    /// Replaces the input map. It must have `3N` rows; columns are inputs.
    pub fn with_input_map(mut self, input_map: DMatrix<f64>) -> Result<Self> {
        if input_map.nrows() != self.velocity_dim() {
            return Err(Error::DimensionMismatch {
                what: "input map rows",
                expected: self.velocity_dim(),
                found: input_map.nrows(),
            });
        }
        self.input_map = input_map;
        Ok(self)
    }

    pub fn with_external_potential(mut self, external: Arc<dyn ExternalPotential>) -> Self {
        self.external = external;
        self
    }

    pub fn n_points(&self) -> usize {
        self.masses.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn elements(&self) -> &[ElasticElement] {
        &self.elements
    }

    pub fn external(&self) -> &dyn ExternalPotential {
        self.external.as_ref()
    }

    /// Constant gravitational acceleration, if the external potential is uniform.
    pub fn gravity(&self) -> Option<Vector3<f64>> {
        self.external.uniform_field()
    }

    /// `3N x m` block of `B` acting on the velocity equations.
    pub fn input_map(&self) -> &DMatrix<f64> {
        &self.input_map
    }

    pub fn n_inputs(&self) -> usize {
        self.input_map.ncols()
    }

    pub fn velocity_dim(&self) -> usize {
        3 * self.masses.len()
    }

    /// `6N + n_el`.
    pub fn state_dim(&self) -> usize {
        6 * self.masses.len() + self.elements.len()
    }

    pub fn check_positions(&self, q: &DVector<f64>) -> Result<()> {
        check_len("positions", self.velocity_dim(), q.len())
    }

    pub fn check_state(&self, x: &State) -> Result<()> {
        check_len("positions", self.velocity_dim(), x.q.len())?;
        check_len("velocities", self.velocity_dim(), x.v.len())?;
        check_len("strains", self.n_elements(), x.c.len())
    }

    /// Cauchy-Green strains computed from the positions, `C~(q)`.
    pub fn strain_map(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_positions(q)?;
        Ok(DVector::from_iterator(
            self.n_elements(),
            self.elements.iter().map(|el| el.strain(q)),
        ))
    }

    /// `G(q) = d C~ / dq`, an `n_el x 3N` matrix. Row `i`, block `k` is
    /// `a_ik (2 / l0_i^2) qbar_i`.
    pub fn strain_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_positions(q)?;
        let mut g = DMatrix::zeros(self.n_elements(), self.velocity_dim());
        for (i, el) in self.elements.iter().enumerate() {
            let rel = el.combine(q) * (2.0 / (el.rest_length * el.rest_length));
            for &(k, a) in &el.coefficients {
                for d in 0..3 {
                    g[(i, 3 * k + d)] = a * rel[d];
                }
            }
        }
        Ok(g)
    }

    pub fn internal_energy(&self, c: &DVector<f64>) -> Result<f64> {
        check_len("strains", self.n_elements(), c.len())?;
        self.per_element(c, |el, ci| el.value(ci))
            .map(|parts| parts.iter().sum())
    }

    /// Work-conjugate stresses `S_i = 2 dV_int / dC_i`.
    pub fn stress(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("strains", self.n_elements(), c.len())?;
        self.per_element(c, |el, ci| el.derivative(ci).map(|d| 2.0 * d))
            .map(DVector::from_vec)
    }

    pub fn kinetic_energy(&self, v: &DVector<f64>) -> Result<f64> {
        check_len("velocities", self.velocity_dim(), v.len())?;
        Ok(0.5
            * self
                .masses
                .iter()
                .enumerate()
                .map(|(k, m)| m * point(v, k).norm_squared())
                .sum::<f64>())
    }

    pub fn external_energy(&self, q: &DVector<f64>) -> Result<f64> {
        self.check_positions(q)?;
        Ok(self.external.value(&self.masses, q))
    }

    pub fn energy_parts(&self, x: &State) -> Result<EnergyParts> {
        self.check_state(x)?;
        Ok(EnergyParts {
            kinetic: self.kinetic_energy(&x.v)?,
            internal: self.internal_energy(&x.c)?,
            external: self.external_energy(&x.q)?,
        })
    }

    /// Total energy `H(x) = T(v) + V_int(C) + V_ext(q)`.
    pub fn hamiltonian(&self, x: &State) -> Result<f64> {
        self.energy_parts(x).map(|e| e.total())
    }

    pub fn efforts(&self, x: &State) -> Result<Efforts> {
        self.check_state(x)?;
        let half_s = self.per_element(&x.c, |el, ci| el.derivative(ci))?;
        Ok(Efforts {
            d_vext: self.external.gradient(&self.masses, &x.q),
            p: self.mass_times(&x.v),
            half_s: DVector::from_vec(half_s),
        })
    }

    /// `grad H(x)` stacked as `(grad V_ext, M v, S/2)`.
    pub fn hamiltonian_gradient(&self, x: &State) -> Result<DVector<f64>> {
        self.efforts(x).map(|e| e.stacked())
    }

    /// `M w` for a stacked 3N vector.
    pub fn mass_times(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = w.clone();
        for (k, m) in self.masses.iter().enumerate() {
            out.fixed_rows_mut::<3>(3 * k).scale_mut(*m);
        }
        out
    }

    /// `M^-1 w` for a stacked 3N vector.
    pub fn mass_solve(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = w.clone();
        for (k, m) in self.masses.iter().enumerate() {
            out.fixed_rows_mut::<3>(3 * k).unscale_mut(*m);
        }
        out
    }

    /// Skew-symmetric structure matrix `J(q)`.
    pub fn structure_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = self.strain_jacobian(q)?;
        let n = self.velocity_dim();
        let ne = self.n_elements();
        let mut j = DMatrix::zeros(2 * n + ne, 2 * n + ne);
        for r in 0..n {
            j[(r, n + r)] = 1.0;
            j[(n + r, r)] = -1.0;
        }
        for i in 0..ne {
            for c in 0..n {
                j[(2 * n + i, n + c)] = g[(i, c)];
                j[(n + c, 2 * n + i)] = -g[(i, c)];
            }
        }
        Ok(j)
    }

    /// Constant descriptor matrix `E = diag(I, M, I)`.
    pub fn descriptor_matrix(&self) -> DMatrix<f64> {
        let n = self.velocity_dim();
        let mut e = DMatrix::identity(self.state_dim(), self.state_dim());
        for (k, m) in self.masses.iter().enumerate() {
            for d in 0..3 {
                e[(n + 3 * k + d, n + 3 * k + d)] = *m;
            }
        }
        e
    }

    /// Full input matrix `B` with zero position and strain rows.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        let n = self.velocity_dim();
        let mut b = DMatrix::zeros(self.state_dim(), self.n_inputs());
        b.rows_mut(n, n).copy_from(&self.input_map);
        b
    }

    /// Canonical state `(q, p, C) = E x`.
    pub fn momenta_state(&self, x: &State) -> Result<CanonicalState> {
        self.check_state(x)?;
        Ok(CanonicalState {
            q: x.q.clone(),
            p: self.mass_times(&x.v),
            c: x.c.clone(),
        })
    }

    /// Inverse of [`MechanicalSystem::momenta_state`].
    pub fn state_from_momenta(&self, xc: &CanonicalState) -> Result<State> {
        check_len("positions", self.velocity_dim(), xc.q.len())?;
        check_len("momenta", self.velocity_dim(), xc.p.len())?;
        check_len("strains", self.n_elements(), xc.c.len())?;
        Ok(State {
            q: xc.q.clone(),
            v: self.mass_solve(&xc.p),
            c: xc.c.clone(),
        })
    }

    /// Total angular momentum about the origin, `sum_k q_k x m_k v_k`.
    pub fn angular_momentum(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<Vector3<f64>> {
        self.check_positions(q)?;
        check_len("velocities", self.velocity_dim(), v.len())?;
        Ok(self
            .masses
            .iter()
            .enumerate()
            .fold(Vector3::zeros(), |acc, (k, m)| {
                acc + point(q, k).cross(&(*m * point(v, k)))
            }))
    }

    /// State with strains consistent with the positions.
    pub fn consistent_state(&self, q: DVector<f64>, v: DVector<f64>) -> Result<State> {
        let c = self.strain_map(&q)?;
        let x = State::new(q, v, c);
        self.check_state(&x)?;
        Ok(x)
    }

    fn per_element<F>(&self, c: &DVector<f64>, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&ElasticElement, f64) -> Result<f64>,
    {
        self.elements
            .iter()
            .zip(c.iter())
            .enumerate()
            .map(|(i, (el, &ci))| f(el, ci).map_err(|e| tag_element(e, i)))
            .collect()
    }
}

pub(crate) fn tag_element(err: Error, element: usize) -> Error {
    match err {
        Error::StrainDomain { value, .. } => Error::StrainDomain { element, value },
        other => other,
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Point `k` of a stacked 3N vector.
pub fn point(stacked: &DVector<f64>, k: usize) -> Vector3<f64> {
    Vector3::new(stacked[3 * k], stacked[3 * k + 1], stacked[3 * k + 2])
}

/// Port-Hamiltonian state `x = (q, v, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub c: DVector<f64>,
}

impl State {
    pub fn new(q: DVector<f64>, v: DVector<f64>, c: DVector<f64>) -> Self {
        Self { q, v, c }
    }

    pub fn dim(&self) -> usize {
        self.q.len() + self.v.len() + self.c.len()
    }

    /// Stacked `(q, v, C)` vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.write_into(&mut out);
        out
    }

    pub fn write_into(&self, out: &mut DVector<f64>) {
        let (nq, nv) = (self.q.len(), self.v.len());
        out.rows_mut(0, nq).copy_from(&self.q);
        out.rows_mut(nq, nv).copy_from(&self.v);
        out.rows_mut(nq + nv, self.c.len()).copy_from(&self.c);
    }

    pub fn from_vector(n_points: usize, n_elements: usize, x: &DVector<f64>) -> Result<Self> {
        let n = 3 * n_points;
        check_len("state vector", 2 * n + n_elements, x.len())?;
        Ok(Self {
            q: x.rows(0, n).into_owned(),
            v: x.rows(n, n).into_owned(),
            c: x.rows(2 * n, n_elements).into_owned(),
        })
    }

    /// Arithmetic midpoint `(self + other) / 2`.
    pub fn midpoint(&self, other: &State) -> State {
        State {
            q: (&self.q + &other.q) * 0.5,
            v: (&self.v + &other.v) * 0.5,
            c: (&self.c + &other.c) * 0.5,
        }
    }
}

/// Co-state `z = (grad V_ext(q), M v, S/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Efforts {
    pub d_vext: DVector<f64>,
    pub p: DVector<f64>,
    pub half_s: DVector<f64>,
}

impl Efforts {
    pub fn stacked(&self) -> DVector<f64> {
        let (a, b, c) = (self.d_vext.len(), self.p.len(), self.half_s.len());
        let mut out = DVector::zeros(a + b + c);
        out.rows_mut(0, a).copy_from(&self.d_vext);
        out.rows_mut(a, b).copy_from(&self.p);
        out.rows_mut(a + b, c).copy_from(&self.half_s);
        out
    }
}

/// State with momenta in place of velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub internal: f64,
    pub external: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.internal + self.external
    }
}
