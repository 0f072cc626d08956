//! Discrete gradients.
//!
//! A discrete gradient `DG f(x0, x1)` replaces `grad f` over a time step and
//! satisfies the directionality identity
//!
//! ```text
//! DG f(x0, x1) . (x1 - x0) = f(x1) - f(x0)
//! ```
//!
//! which turns the midpoint-type scheme into an exact energy balance.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_len, tag_element, MechanicalSystem, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGradParams {
    /// Relative separation below which the analytic gradient at the midpoint
    /// replaces the difference quotient.
    pub fallback_threshold: f64,
}

impl DGradParams {
    pub const DEFAULT_FALLBACK_THRESHOLD: f64 = 1e-10;

    pub fn new(fallback_threshold: f64) -> Result<Self> {
        if !(fallback_threshold.is_finite() && fallback_threshold > 0.0) {
            return Err(Error::InvalidParams(format!(
                "fallback threshold must be positive, got {fallback_threshold}"
            )));
        }
        Ok(Self { fallback_threshold })
    }

    fn separated(&self, distance: f64, a: f64, b: f64) -> bool {
        distance > self.fallback_threshold * 1f64.max(a).max(b)
    }
}

impl Default for DGradParams {
    fn default() -> Self {
        Self {
            fallback_threshold: Self::DEFAULT_FALLBACK_THRESHOLD,
        }
    }
}

/// A scalar potential of one strain-like variable.
pub trait ScalarPotential {
    fn value(&self, c: f64) -> Result<f64>;

    fn derivative(&self, c: f64) -> Result<f64>;

    fn second_derivative(&self, c: f64) -> Result<f64>;

    /// `value(c1) - value(c0)`. Override when a cancellation-free form exists.
    fn increment(&self, c0: f64, c1: f64) -> Result<f64> {
        Ok(self.value(c1)? - self.value(c0)?)
    }
}

/// Greenspan's scalar discrete gradient: the difference quotient of
/// `value_fn`, or `grad_fn` at the midpoint when the arguments (nearly)
/// coincide.
pub fn greenspan_dg<F, G>(value_fn: F, grad_fn: G, c0: f64, c1: f64, params: &DGradParams) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    G: Fn(f64) -> Result<f64>,
{
    let dc = c1 - c0;
    if params.separated(dc.abs(), c0.abs(), c1.abs()) {
        Ok((value_fn(c1)? - value_fn(c0)?) / dc)
    } else {
        grad_fn(0.5 * (c0 + c1))
    }
}

/// [`greenspan_dg`] for a [`ScalarPotential`], using its `increment`.
pub fn greenspan_dg_of<P: ScalarPotential + ?Sized>(
    potential: &P,
    c0: f64,
    c1: f64,
    params: &DGradParams,
) -> Result<f64> {
    let dc = c1 - c0;
    if params.separated(dc.abs(), c0.abs(), c1.abs()) {
        Ok(potential.increment(c0, c1)? / dc)
    } else {
        potential.derivative(0.5 * (c0 + c1))
    }
}

/// Partial derivative of [`greenspan_dg_of`] with respect to `c1`.
///
/// For nearby arguments the limit `V''(c_mid) / 2` is used, which is accurate
/// to `O(dc)`. Only Newton matrices depend on this.
pub fn greenspan_dg_partial<P: ScalarPotential + ?Sized>(
    potential: &P,
    c0: f64,
    c1: f64,
    params: &DGradParams,
) -> Result<f64> {
    const TAYLOR_SWITCH: f64 = 1e-5;
    let dc = c1 - c0;
    let scale = 1f64.max(c0.abs()).max(c1.abs());
    if dc.abs() > TAYLOR_SWITCH * scale {
        let dg = greenspan_dg_of(potential, c0, c1, params)?;
        Ok((potential.derivative(c1)? - dg) / dc)
    } else {
        Ok(0.5 * potential.second_derivative(0.5 * (c0 + c1))?)
    }
}

/// Gonzalez's midpoint discrete gradient
///
/// ```text
/// DG f = g_mid + (f(x1) - f(x0) - g_mid . dx) / (dx . dx) * dx,   g_mid = grad f((x0 + x1) / 2)
/// ```
///
/// falling back to `g_mid` when `|dx|` is below the relative threshold.
pub fn gonzalez_dg<F, G>(
    value_fn: F,
    grad_fn: G,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    params: &DGradParams,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    check_len("discrete gradient endpoint", x0.len(), x1.len())?;
    let mid = (x0 + x1) * 0.5;
    let g_mid = grad_fn(&mid)?;
    check_len("gradient", x0.len(), g_mid.len())?;
    let dx = x1 - x0;
    let dist2 = dx.norm_squared();
    if !params.separated(dist2.sqrt(), x0.norm(), x1.norm()) {
        return Ok(g_mid);
    }
    let defect = value_fn(x1)? - value_fn(x0)? - g_mid.dot(&dx);
    Ok(g_mid + dx * (defect / dist2))
}

/// Discrete gradient of the Hamiltonian between two states:
///
/// ```text
/// ( DG V_ext(q0, q1),  M (v0 + v1) / 2,  [ DG V_int,i(C0_i, C1_i) ]_i )
/// ```
///
/// with Greenspan quotients per element in the strain block.
pub fn discrete_hamiltonian_gradient(
    sys: &MechanicalSystem,
    x0: &State,
    x1: &State,
    params: &DGradParams,
) -> Result<DVector<f64>> {
    sys.check_state(x0)?;
    sys.check_state(x1)?;
    let n = sys.velocity_dim();
    let mut out = DVector::zeros(sys.state_dim());
    out.rows_mut(0, n).copy_from(
        &sys.external()
            .discrete_gradient(sys.masses(), &x0.q, &x1.q, params),
    );
    out.rows_mut(n, n)
        .copy_from(&sys.mass_times(&((&x0.v + &x1.v) * 0.5)));
    for (i, el) in sys.elements().iter().enumerate() {
        out[2 * n + i] =
            greenspan_dg_of(el, x0.c[i], x1.c[i], params).map_err(|e| tag_element(e, i))?;
    }
    Ok(out)
}
