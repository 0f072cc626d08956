//! Conservation bookkeeping.
//!
//! Every quantity is recomputed from stored states, never taken from solver
//! internals, so a report can be regenerated from a trajectory file.

use std::fmt;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{StepStats, Trajectory};
use crate::model::{MechanicalSystem, State};

/// Kinematic constraint residual `g = C - C~(q)`.
pub fn kinematic_residual(sys: &MechanicalSystem, x: &State) -> Result<DVector<f64>> {
    sys.check_state(x)?;
    Ok(&x.c - sys.strain_map(&x.q)?)
}

/// Diagnostics recorded for one state of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub hamiltonian: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub external: f64,
    pub angular_momentum: [f64; 3],
    /// `max_i |C_i - C~_i(q)|`.
    pub kinematic_residual: f64,
    /// `h y . u` of the step that produced this state.
    pub power_supplied: f64,
    pub newton: StepStats,
}

impl StepDiagnostics {
    pub fn evaluate(
        sys: &MechanicalSystem,
        t: f64,
        x: &State,
        power_supplied: f64,
        newton: StepStats,
    ) -> Result<Self> {
        let parts = sys.energy_parts(x)?;
        let l = sys.angular_momentum(&x.q, &x.v)?;
        let g = kinematic_residual(sys, x)?;
        Ok(Self {
            t,
            hamiltonian: parts.total(),
            kinetic: parts.kinetic,
            internal: parts.internal,
            external: parts.external,
            angular_momentum: [l.x, l.y, l.z],
            kinematic_residual: g.amax(),
            power_supplied,
            newton,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationTolerances {
    /// Bound on `|H^{n+1} - H^n - h y . u|`.
    pub energy: f64,
    /// Bound on `|(L^{n+1} - L^n) . b_hat|`.
    pub angular_momentum: f64,
    /// Bound on `max_n |C^n - C~(q^n)|_inf`.
    pub kinematic: f64,
    /// Relative bound on recomputed versus recorded `H` and `L`.
    pub bookkeeping: f64,
    /// Angular momentum is only conserved without inputs; runs with inputs
    /// should switch this off.
    pub check_angular_momentum: bool,
}

impl Default for ConservationTolerances {
    fn default() -> Self {
        Self {
            energy: 1e-8,
            angular_momentum: 1e-8,
            kinematic: 1e-8,
            bookkeeping: 1e-12,
            check_angular_momentum: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub steps: usize,
    pub max_energy_increment: f64,
    pub max_energy_balance_error: f64,
    /// Unit axis along which angular momentum is checked. `None` means all
    /// three components are checked (no external field).
    pub axis: Option<[f64; 3]>,
    pub max_axial_momentum_change: f64,
    pub max_kinematic_residual: f64,
    pub max_bookkeeping_mismatch: f64,
    pub tolerances: ConservationTolerances,
    pub energy_pass: bool,
    /// `None` when the check was disabled.
    pub angular_momentum_pass: Option<bool>,
    pub kinematic_pass: bool,
    pub bookkeeping_pass: bool,
}

impl ConservationReport {
    pub fn passed(&self) -> bool {
        self.energy_pass
            && self.angular_momentum_pass.unwrap_or(true)
            && self.kinematic_pass
            && self.bookkeeping_pass
    }

    /// Names of the failed criteria.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.energy_pass {
            out.push("energy");
        }
        if self.angular_momentum_pass == Some(false) {
            out.push("angular_momentum");
        }
        if !self.kinematic_pass {
            out.push("kinematic");
        }
        if !self.bookkeeping_pass {
            out.push("bookkeeping");
        }
        out
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

impl fmt::Display for ConservationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.tolerances;
        writeln!(f, "conservation report over {} steps", self.steps)?;
        writeln!(f, "  max |dH|                 {:.3e}", self.max_energy_increment)?;
        writeln!(
            f,
            "  max |dH - h y.u|         {:.3e}  (tol {:.1e})  {}",
            self.max_energy_balance_error,
            t.energy,
            verdict(self.energy_pass)
        )?;
        match self.angular_momentum_pass {
            Some(pass) => writeln!(
                f,
                "  max |dL . b|             {:.3e}  (tol {:.1e})  {}",
                self.max_axial_momentum_change,
                t.angular_momentum,
                verdict(pass)
            )?,
            None => writeln!(
                f,
                "  max |dL . b|             {:.3e}  (not checked)",
                self.max_axial_momentum_change
            )?,
        }
        writeln!(
            f,
            "  max |C - C~(q)|_inf      {:.3e}  (tol {:.1e})  {}",
            self.max_kinematic_residual,
            t.kinematic,
            verdict(self.kinematic_pass)
        )?;
        writeln!(
            f,
            "  bookkeeping mismatch     {:.3e}  (tol {:.1e})  {}",
            self.max_bookkeeping_mismatch,
            t.bookkeeping,
            verdict(self.bookkeeping_pass)
        )?;
        write!(f, "  overall: {}", verdict(self.passed()))
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Aggregates per-step conservation errors of a trajectory.
///
/// `gravity_axis` fixes the direction along which angular momentum must be
/// conserved; a zero vector checks the full angular momentum vector.
pub fn analyze(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    gravity_axis: Vector3<f64>,
    tolerances: &ConservationTolerances,
) -> Result<ConservationReport> {
    if traj.states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if traj.diagnostics.len() != traj.states.len() {
        return Err(Error::DimensionMismatch {
            what: "trajectory diagnostics",
            expected: traj.states.len(),
            found: traj.diagnostics.len(),
        });
    }
    let axis = (gravity_axis.norm() > 0.0).then(|| gravity_axis.normalize());

    let mut hs = Vec::with_capacity(traj.len());
    let mut ls = Vec::with_capacity(traj.len());
    let mut max_kin: f64 = 0.0;
    let mut max_book: f64 = 0.0;
    for (x, d) in traj.states.iter().zip(&traj.diagnostics) {
        let h = sys.hamiltonian(x)?;
        let l = sys.angular_momentum(&x.q, &x.v)?;
        max_kin = max_kin.max(kinematic_residual(sys, x)?.amax());
        max_book = max_book.max(relative_gap(h, d.hamiltonian));
        for k in 0..3 {
            max_book = max_book.max(relative_gap(l[k], d.angular_momentum[k]));
        }
        hs.push(h);
        ls.push(l);
    }

    let mut max_dh: f64 = 0.0;
    let mut max_balance: f64 = 0.0;
    let mut max_dl: f64 = 0.0;
    for n in 1..traj.len() {
        let dh = hs[n] - hs[n - 1];
        max_dh = max_dh.max(dh.abs());
        max_balance = max_balance.max((dh - traj.diagnostics[n].power_supplied).abs());
        let dl = ls[n] - ls[n - 1];
        let change = match axis {
            Some(b) => dl.dot(&b).abs(),
            None => dl.amax(),
        };
        max_dl = max_dl.max(change);
    }

    Ok(ConservationReport {
        steps: traj.len() - 1,
        max_energy_increment: max_dh,
        max_energy_balance_error: max_balance,
        axis: axis.map(|b| [b.x, b.y, b.z]),
        max_axial_momentum_change: max_dl,
        max_kinematic_residual: max_kin,
        max_bookkeeping_mismatch: max_book,
        tolerances: *tolerances,
        energy_pass: max_balance <= tolerances.energy,
        angular_momentum_pass: tolerances
            .check_angular_momentum
            .then_some(max_dl <= tolerances.angular_momentum),
        kinematic_pass: max_kin <= tolerances.kinematic,
        bookkeeping_pass: max_book <= tolerances.bookkeeping,
    })
}
