//! Implicit one-step time integration.
//!
//! One step from `x0` to `x1` with step size `h` solves
//!
//! ```text
//! E (x1 - x0) = h ( J(x_mid) z_mid + B u_mid ),     x_mid = (x0 + x1) / 2
//! ```
//!
//! for `x1` by Newton's method. With [`Scheme::DiscreteGradient`] the
//! efforts solve `E^T z_mid = DG H(x0, x1)`, which gives the discrete energy
//! balance `H(x1) - H(x0) = h y . u` exactly. [`Scheme::ImplicitMidpoint`]
//! uses `E^T z_mid = grad H(x_mid)` instead and serves as a baseline.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dgrad::{self, DGradParams, ScalarPotential};
use crate::diagnostics::StepDiagnostics;
use crate::error::{Error, Result};
use crate::model::{check_len, tag_element, MechanicalSystem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DiscreteGradient,
    ImplicitMidpoint,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::DiscreteGradient => "discrete_gradient",
            Scheme::ImplicitMidpoint => "implicit_midpoint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Forward differences on the step residual.
    FiniteDifference,
    Analytic,
}

/// What to do when the initial strains disagree with the initial positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyPolicy {
    Warn,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorParams {
    pub h: f64,
    pub t0: f64,
    pub t_end: f64,
    /// Absolute tolerance on the Euclidean norm of the step residual.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub dgrad: DGradParams,
    pub jacobian_mode: JacobianMode,
    pub scheme: Scheme,
    /// Allowed `|C0 - C~(q0)|` per element.
    pub consistency_tol: f64,
    pub on_inconsistent: ConsistencyPolicy,
}

impl IntegratorParams {
    pub const DEFAULT_NEWTON_TOL: f64 = 1e-9;
    pub const DEFAULT_NEWTON_MAX_ITERS: usize = 50;
    pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-12;

    pub fn new(h: f64, t0: f64, t_end: f64) -> Result<Self> {
        let params = Self {
            h,
            t0,
            t_end,
            newton_tol: Self::DEFAULT_NEWTON_TOL,
            newton_max_iters: Self::DEFAULT_NEWTON_MAX_ITERS,
            dgrad: DGradParams::default(),
            jacobian_mode: JacobianMode::FiniteDifference,
            scheme: Scheme::DiscreteGradient,
            consistency_tol: Self::DEFAULT_CONSISTENCY_TOL,
            on_inconsistent: ConsistencyPolicy::Reject,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_jacobian_mode(mut self, mode: JacobianMode) -> Self {
        self.jacobian_mode = mode;
        self
    }

    pub fn with_newton_tol(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }

    /// Checks the parameter invariants. A zero-length horizon is allowed and
    /// produces a single-state trajectory.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.t0.is_finite() && self.t_end.is_finite()) {
            return bad("time interval must be finite".into());
        }
        if self.t_end < self.t0 {
            return bad(format!("t_end = {} precedes t0 = {}", self.t_end, self.t0));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return bad(format!("step size must be positive, got {}", self.h));
        }
        if self.t_end > self.t0 && self.h > self.t_end - self.t0 {
            return bad(format!(
                "step size {} exceeds the horizon {}",
                self.h,
                self.t_end - self.t0
            ));
        }
        if !(self.newton_tol.is_finite() && self.newton_tol > 0.0) {
            return bad(format!("Newton tolerance must be positive, got {}", self.newton_tol));
        }
        if self.newton_max_iters == 0 {
            return bad("Newton iteration limit must be at least 1".into());
        }
        if self.consistency_tol.is_nan() || self.consistency_tol < 0.0 {
            return bad("consistency tolerance must be non-negative".into());
        }
        DGradParams::new(self.dgrad.fallback_threshold).map(|_| ())
    }

    /// Sizes of all steps from `t0` to `t_end`. Every step has size `h`
    /// except a shortened last one that lands on `t_end`.
    pub fn step_sizes(&self) -> Vec<f64> {
        let span = self.t_end - self.t0;
        if span <= 0.0 {
            return Vec::new();
        }
        let ratio = span / self.h;
        let nearest = ratio.round();
        let n = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        };
        let mut sizes = vec![self.h; n];
        let last_start = self.t0 + (n - 1) as f64 * self.h;
        sizes[n - 1] = self.t_end - last_start;
        sizes
    }

    /// Start time of step `n`.
    fn time_of(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.h
    }
}

/// Newton statistics of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
}

/// Non-potential forces `u(t_mid, x_mid)` entering through `B`.
pub trait InputSignal: Send + Sync {
    fn input(&self, sys: &MechanicalSystem, t_mid: f64, x_mid: &State) -> DVector<f64>;

    /// True if the signal is identically zero.
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroInput;

impl InputSignal for ZeroInput {
    fn input(&self, sys: &MechanicalSystem, _t_mid: f64, _x_mid: &State) -> DVector<f64> {
        DVector::zeros(sys.n_inputs())
    }

    fn is_zero(&self) -> bool {
        true
    }
}

/// Output feedback `u = -d y = -d B^T v_mid`, which only removes energy.
#[derive(Debug, Clone, Copy)]
pub struct ViscousDamping {
    pub damping: f64,
}

impl InputSignal for ViscousDamping {
    fn input(&self, sys: &MechanicalSystem, _t_mid: f64, x_mid: &State) -> DVector<f64> {
        sys.input_map().tr_mul(&x_mid.v) * -self.damping
    }

    fn is_zero(&self) -> bool {
        self.damping == 0.0
    }
}

/// Wraps a closure `(t_mid, x_mid) -> u` as an input signal.
pub struct FnInput<F>(pub F);

impl<F> InputSignal for FnInput<F>
where
    F: Fn(f64, &State) -> DVector<f64> + Send + Sync,
{
    fn input(&self, _sys: &MechanicalSystem, t_mid: f64, x_mid: &State) -> DVector<f64> {
        (self.0)(t_mid, x_mid)
    }
}

fn check_strains(c: &DVector<f64>) -> Result<()> {
    match c.iter().position(|&ci| ci.is_nan() || ci <= 0.0) {
        Some(element) => Err(Error::StrainDomain {
            element,
            value: c[element],
        }),
        None => Ok(()),
    }
}

/// Efforts `z_mid` of one step, stacked as `(z_q, v_mid, z_C)`.
pub fn midpoint_efforts(
    sys: &MechanicalSystem,
    x0: &State,
    x1: &State,
    scheme: Scheme,
    dgrad_params: &DGradParams,
) -> Result<DVector<f64>> {
    sys.check_state(x0)?;
    sys.check_state(x1)?;
    check_strains(&x0.c)?;
    check_strains(&x1.c)?;
    let n = sys.velocity_dim();
    let mut z = DVector::zeros(sys.state_dim());
    let mid = x0.midpoint(x1);
    match scheme {
        Scheme::DiscreteGradient => {
            let dg = dgrad::discrete_hamiltonian_gradient(sys, x0, x1, dgrad_params)?;
            z.rows_mut(0, n).copy_from(&dg.rows(0, n));
            // E^T z = DG H  =>  z_v = M^-1 (M v_mid) = v_mid
            z.rows_mut(n, n).copy_from(&mid.v);
            let ne = sys.n_elements();
            z.rows_mut(2 * n, ne).copy_from(&dg.rows(2 * n, ne));
        }
        Scheme::ImplicitMidpoint => {
            let grad = sys.efforts(&mid)?;
            z.rows_mut(0, n).copy_from(&grad.d_vext);
            z.rows_mut(n, n).copy_from(&mid.v);
            z.rows_mut(2 * n, sys.n_elements()).copy_from(&grad.half_s);
        }
    }
    Ok(z)
}

/// Residual `E (x1 - x0) - h (J(x_mid) z_mid + B u_mid)` of one step.
pub fn step_residual(
    sys: &MechanicalSystem,
    x0: &State,
    x1: &State,
    h: f64,
    u_mid: &DVector<f64>,
    params: &IntegratorParams,
) -> Result<DVector<f64>> {
    check_len("input", sys.n_inputs(), u_mid.len())?;
    let z = midpoint_efforts(sys, x0, x1, params.scheme, &params.dgrad)?;
    let n = sys.velocity_dim();
    let ne = sys.n_elements();
    let q_mid = (&x0.q + &x1.q) * 0.5;
    let g = sys.strain_jacobian(&q_mid)?;
    let z_q = z.rows(0, n);
    let z_v = z.rows(n, n);
    let z_c = z.rows(2 * n, ne);

    let mut r = DVector::zeros(sys.state_dim());
    r.rows_mut(0, n).copy_from(&(&x1.q - &x0.q - z_v * h));
    let force = -z_q - g.tr_mul(&z_c) + sys.input_map() * u_mid;
    r.rows_mut(n, n)
        .copy_from(&(sys.mass_times(&(&x1.v - &x0.v)) - force * h));
    r.rows_mut(2 * n, ne)
        .copy_from(&(&x1.c - &x0.c - (&g * z_v) * h));
    Ok(r)
}

/// Collocated output `y = B^T z_mid`.
pub fn collocated_output(sys: &MechanicalSystem, z_mid: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("efforts", sys.state_dim(), z_mid.len())?;
    let n = sys.velocity_dim();
    Ok(sys.input_map().tr_mul(&z_mid.rows(n, n)))
}

/// Everything produced by one converged step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    pub stats: StepStats,
    /// Collocated output `y^{n+1/2}`.
    pub output: DVector<f64>,
    /// Input `u^{n+1/2}`.
    pub input: DVector<f64>,
}

impl StepOutcome {
    /// Port power over the step, `h y . u`.
    pub fn power_supplied(&self, h: f64) -> f64 {
        h * self.output.dot(&self.input)
    }
}

struct StepProblem<'a> {
    sys: &'a MechanicalSystem,
    x0: &'a State,
    t_mid: f64,
    h: f64,
    params: &'a IntegratorParams,
    input: &'a dyn InputSignal,
}

impl StepProblem<'_> {
    fn unpack(&self, x: &DVector<f64>) -> State {
        State::from_vector(self.sys.n_points(), self.sys.n_elements(), x)
            .expect("Newton iterate has the state dimension")
    }

    fn input_at(&self, x1: &State) -> DVector<f64> {
        if self.input.is_zero() {
            DVector::zeros(self.sys.n_inputs())
        } else {
            self.input.input(self.sys, self.t_mid, &self.x0.midpoint(x1))
        }
    }

    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let x1 = self.unpack(x);
        let u = self.input_at(&x1);
        step_residual(self.sys, self.x0, &x1, self.h, &u, self.params)
    }

    fn jacobian(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self.params.jacobian_mode {
            JacobianMode::FiniteDifference => forward_difference(x, r, |y| self.residual(y)),
            JacobianMode::Analytic => self.analytic_jacobian(x),
        }
    }

    fn analytic_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let sys = self.sys;
        let h = self.h;
        let n = sys.velocity_dim();
        let ne = sys.n_elements();
        let x1 = self.unpack(x);
        check_strains(&x1.c)?;
        let q_mid = (&self.x0.q + &x1.q) * 0.5;
        let v_mid = (&self.x0.v + &x1.v) * 0.5;
        let g = sys.strain_jacobian(&q_mid)?;

        let mut jac = DMatrix::zeros(sys.state_dim(), sys.state_dim());
        for r in 0..n {
            jac[(r, r)] = 1.0;
            jac[(r, n + r)] = -0.5 * h;
        }
        for (k, m) in sys.masses().iter().enumerate() {
            for d in 0..3 {
                jac[(n + 3 * k + d, n + 3 * k + d)] = *m;
            }
        }
        for i in 0..ne {
            jac[(2 * n + i, 2 * n + i)] = 1.0;
        }

        for (i, el) in sys.elements().iter().enumerate() {
            let (c0, c1) = (self.x0.c[i], x1.c[i]);
            let (w, dw) = match self.params.scheme {
                Scheme::DiscreteGradient => (
                    dgrad::greenspan_dg_of(el, c0, c1, &self.params.dgrad),
                    dgrad::greenspan_dg_partial(el, c0, c1, &self.params.dgrad),
                ),
                Scheme::ImplicitMidpoint => {
                    let c_mid = 0.5 * (c0 + c1);
                    (
                        el.derivative(c_mid),
                        el.second_derivative(c_mid).map(|d| 0.5 * d),
                    )
                }
            };
            let w = w.map_err(|e| tag_element(e, i))?;
            let dw = dw.map_err(|e| tag_element(e, i))?;
            let l0_sq = el.rest_length() * el.rest_length();
            let v_rel = el.combine(&v_mid);
            for &(k, a_k) in el.coefficients() {
                // d(G^T w)/dq1: (1/2) w (2 / l0^2) a_ik a_ij I
                for &(j, a_j) in el.coefficients() {
                    let val = h * w * a_k * a_j / l0_sq;
                    for d in 0..3 {
                        jac[(n + 3 * k + d, 3 * j + d)] += val;
                    }
                }
                for d in 0..3 {
                    jac[(n + 3 * k + d, 2 * n + i)] += h * g[(i, 3 * k + d)] * dw;
                    jac[(2 * n + i, 3 * k + d)] -= h * a_k * v_rel[d] / l0_sq;
                    jac[(2 * n + i, n + 3 * k + d)] -= 0.5 * h * g[(i, 3 * k + d)];
                }
            }
        }

        if sys.gravity().is_none() {
            // External force term h z_q, differentiated numerically.
            let zq = |y: &DVector<f64>| -> Result<DVector<f64>> {
                let x1 = self.unpack(y);
                let z = midpoint_efforts(sys, self.x0, &x1, self.params.scheme, &self.params.dgrad)?;
                Ok(z.rows(0, n) * h)
            };
            let base = zq(x)?;
            let dz = forward_difference(x, &base, zq)?;
            let mut block = jac.rows_mut(n, n);
            block += &dz;
        }

        if !self.input.is_zero() {
            let bu = |y: &DVector<f64>| -> Result<DVector<f64>> {
                let x1 = self.unpack(y);
                Ok(sys.input_map() * self.input_at(&x1) * (-h))
            };
            let base = bu(x)?;
            let du = forward_difference(x, &base, bu)?;
            let mut block = jac.rows_mut(n, n);
            block += &du;
        }
        Ok(jac)
    }
}

fn forward_difference<F>(x: &DVector<f64>, fx: &DVector<f64>, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut jac = DMatrix::zeros(fx.len(), x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let step = sqrt_eps * (1.0 + x[j].abs());
        xp[j] = x[j] + step;
        // exact representable increment
        let dx = xp[j] - x[j];
        let fp = f(&xp)?;
        jac.column_mut(j).copy_from(&((fp - fx) / dx));
        xp[j] = x[j];
    }
    Ok(jac)
}

/// Solves one step of size `h` (which may be negative) starting at `(t0, x0)`.
///
/// Newton starts from `x1 = x0`. Strains that leave the positive domain abort
/// the step with [`Error::StrainDomain`].
pub fn solve_step_with(
    sys: &MechanicalSystem,
    x0: &State,
    t0: f64,
    h: f64,
    params: &IntegratorParams,
    input: &dyn InputSignal,
) -> Result<StepOutcome> {
    sys.check_state(x0)?;
    check_strains(&x0.c)?;
    let problem = StepProblem {
        sys,
        x0,
        t_mid: t0 + 0.5 * h,
        h,
        params,
        input,
    };
    let mut x = x0.to_vector();
    let mut iterations = 0;
    loop {
        let r = problem.residual(&x)?;
        let norm = r.norm();
        if !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                residual_norm: norm,
            });
        }
        if norm <= params.newton_tol {
            log::debug!("step t0 = {t0}, h = {h}: {iterations} Newton iterations, residual {norm:e}");
            let state = problem.unpack(&x);
            let mid = x0.midpoint(&state);
            let u = problem.input_at(&state);
            let y = sys.input_map().tr_mul(&mid.v);
            return Ok(StepOutcome {
                state,
                stats: StepStats {
                    iterations,
                    final_residual_norm: norm,
                    converged: true,
                },
                output: y,
                input: u,
            });
        }
        if iterations >= params.newton_max_iters {
            return Err(Error::NonConvergence {
                iterations,
                residual_norm: norm,
            });
        }
        let jac = problem.jacobian(&x, &r)?;
        let dx = jac
            .lu()
            .solve(&(-r))
            .ok_or(Error::SingularJacobian {
                iteration: iterations,
            })?;
        x += dx;
        iterations += 1;
        check_strains(&x.rows(2 * sys.velocity_dim(), sys.n_elements()).into_owned())?;
    }
}

/// One step of size `params.h` with the configured scheme.
pub fn solve_step(
    sys: &MechanicalSystem,
    x0: &State,
    t0: f64,
    params: &IntegratorParams,
    input: &dyn InputSignal,
) -> Result<(State, StepStats)> {
    solve_step_with(sys, x0, t0, params.h, params, input).map(|o| (o.state, o.stats))
}

/// One step of the implicit midpoint baseline, regardless of `params.scheme`.
pub fn implicit_midpoint_step(
    sys: &MechanicalSystem,
    x0: &State,
    t0: f64,
    params: &IntegratorParams,
    input: &dyn InputSignal,
) -> Result<(State, StepStats)> {
    let params = params.with_scheme(Scheme::ImplicitMidpoint);
    solve_step(sys, x0, t0, &params, input)
}

/// Port variables of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PortRecord {
    pub h: f64,
    pub t_mid: f64,
    pub output: DVector<f64>,
    pub input: DVector<f64>,
}

/// States at `t0, t0 + h, ..., t_end` with per-state diagnostics.
///
/// `diagnostics[n]` belongs to `states[n]`; its power and Newton fields refer
/// to the step that produced `states[n]` (zero for the initial state).
/// `ports[n]` describes the step from `states[n]` to `states[n + 1]` and is
/// empty for trajectories reloaded from files.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub ports: Vec<PortRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.diagnostics.iter().map(|d| d.t)
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }
}

fn check_initial_consistency(sys: &MechanicalSystem, x0: &State, params: &IntegratorParams) -> Result<()> {
    let c_tilde = sys.strain_map(&x0.q)?;
    for (i, (c, ct)) in x0.c.iter().zip(c_tilde.iter()).enumerate() {
        let residual = (c - ct).abs();
        if residual.is_nan() || residual > params.consistency_tol {
            let err = Error::InconsistentInitialStrain {
                element: i,
                residual,
                tolerance: params.consistency_tol,
            };
            match params.on_inconsistent {
                ConsistencyPolicy::Reject => return Err(err),
                ConsistencyPolicy::Warn => log::warn!("{err}"),
            }
        }
    }
    Ok(())
}

fn step_failed(step: usize, time: f64) -> impl FnOnce(Error) -> Error {
    move |source| Error::StepFailed {
        step,
        time,
        source: Box::new(source),
    }
}

/// Integrates from `params.t0` to `params.t_end` and records diagnostics for
/// every state.
pub fn integrate(
    sys: &MechanicalSystem,
    x0: &State,
    params: &IntegratorParams,
    input: &dyn InputSignal,
) -> Result<Trajectory> {
    params.validate()?;
    sys.check_state(x0)?;
    check_initial_consistency(sys, x0, params)?;

    let sizes = params.step_sizes();
    let mut traj = Trajectory {
        states: Vec::with_capacity(sizes.len() + 1),
        diagnostics: Vec::with_capacity(sizes.len() + 1),
        ports: Vec::with_capacity(sizes.len()),
    };
    traj.diagnostics.push(StepDiagnostics::evaluate(
        sys,
        params.t0,
        x0,
        0.0,
        StepStats::default(),
    )?);
    traj.states.push(x0.clone());

    for (n, &h) in sizes.iter().enumerate() {
        let t = params.time_of(n);
        let current = traj.states.last().expect("trajectory starts with x0");
        let outcome = solve_step_with(sys, current, t, h, params, input)
            .map_err(step_failed(n, t))?;
        let t_next = if n + 1 == sizes.len() {
            params.t_end
        } else {
            params.time_of(n + 1)
        };
        let power = outcome.power_supplied(h);
        traj.diagnostics.push(
            StepDiagnostics::evaluate(sys, t_next, &outcome.state, power, outcome.stats)
                .map_err(step_failed(n, t))?,
        );
        traj.ports.push(PortRecord {
            h,
            t_mid: t + 0.5 * h,
            output: outcome.output,
            input: outcome.input,
        });
        traj.states.push(outcome.state);
    }
    Ok(traj)
}

/// Final state at `params.t_end` without recording the trajectory.
pub fn propagate(
    sys: &MechanicalSystem,
    x0: &State,
    params: &IntegratorParams,
    input: &dyn InputSignal,
) -> Result<State> {
    params.validate()?;
    sys.check_state(x0)?;
    check_initial_consistency(sys, x0, params)?;
    let mut x = x0.clone();
    for (n, &h) in params.step_sizes().iter().enumerate() {
        let t = params.time_of(n);
        x = solve_step_with(sys, &x, t, h, params, input)
            .map_err(step_failed(n, t))?
            .state;
    }
    Ok(x)
}
