//! Simulation runs, reports and convergence sweeps.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use elastoph::integrator::propagate;
use elastoph::{analyze, integrate, ConservationReport, Error as SimError, Scheme, Trajectory};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::csv_io::{self, CsvError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_REPORT_FAILURE: i32 = 4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("integration failed: {0}")]
    Integration(#[from] SimError),
    #[error("sweep at h = {h:e} failed: {source}")]
    SweepStep {
        h: f64,
        #[source]
        source: SimError,
    },
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Integration(_) | RunError::SweepStep { .. } => EXIT_NON_CONVERGENCE,
            RunError::Output { .. } => EXIT_IO,
        }
    }
}

fn output_error(path: &Path, err: impl fmt::Display) -> RunError {
    RunError::Output {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

/// Report file contents: run metadata plus the conservation report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub scheme: Scheme,
    pub h: f64,
    pub t0: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub input: String,
    pub states: usize,
    pub max_newton_iterations: usize,
    pub report: ConservationReport,
}

impl ReportDocument {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are TOML-representable")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub document: ReportDocument,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.document.report.passed() {
            EXIT_OK
        } else {
            EXIT_REPORT_FAILURE
        }
    }
}

/// Integrates the configured system and builds its conservation report.
pub fn simulate(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let input = config.input.signal();
    let trajectory = integrate(&config.system, &config.initial, &config.integrator, input.as_ref())?;
    let report = analyze(
        &config.system,
        &trajectory,
        config.gravity_axis(),
        &config.tolerances,
    )?;
    let p = &config.integrator;
    let document = ReportDocument {
        scheme: p.scheme,
        h: p.h,
        t0: p.t0,
        t_end: p.t_end,
        newton_tol: p.newton_tol,
        input: config.input.to_string(),
        states: trajectory.len(),
        max_newton_iterations: trajectory
            .diagnostics
            .iter()
            .map(|d| d.newton.iterations)
            .max()
            .unwrap_or(0),
        report,
    };
    Ok(RunOutcome {
        trajectory,
        document,
    })
}

pub fn write_csv_file(path: &Path, traj: &Trajectory) -> Result<(), RunError> {
    let file = File::create(path).map_err(|e| output_error(path, e))?;
    csv_io::write_trajectory(BufWriter::new(file), traj).map_err(|e: CsvError| output_error(path, e))
}

pub fn write_report_file(path: &Path, doc: &ReportDocument) -> Result<(), RunError> {
    std::fs::write(path, doc.to_toml()).map_err(|e| output_error(path, e))
}

/// Files written by [`run`].
#[derive(Debug, Clone, Default)]
pub struct RunTargets {
    pub trajectory: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Runs a simulation, writes the requested files and prints the summary.
/// Returns the process exit code.
pub fn run<W: Write>(config: &RunConfig, targets: &RunTargets, mut summary: W) -> Result<i32, RunError> {
    let outcome = simulate(config)?;
    if let Some(path) = &targets.trajectory {
        write_csv_file(path, &outcome.trajectory)?;
    }
    if let Some(path) = &targets.report {
        write_report_file(path, &outcome.document)?;
    }
    let d = &outcome.document;
    let _ = writeln!(
        summary,
        "{} scheme, h = {:e}, t in [{}, {}], {} states, max Newton iterations {}",
        d.scheme, d.h, d.t0, d.t_end, d.states, d.max_newton_iterations
    );
    let _ = writeln!(summary, "{}", d.report);
    Ok(outcome.exit_code())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub steps: usize,
    /// Euclidean norm of the final-state difference to the reference run.
    pub error: f64,
    /// `log2`-type order estimate against the previous (larger) step size.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub scheme: Scheme,
    pub t_end: f64,
    pub h_ref: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} scheme, t_end = {}, reference h = {:e}",
            self.scheme, self.t_end, self.h_ref
        )?;
        writeln!(f, "{:>12} {:>8} {:>14} {:>8}", "h", "steps", "error", "order")?;
        for r in &self.rows {
            let order = r.order.map_or("-".to_string(), |o| format!("{o:.3}"));
            writeln!(f, "{:>12.4e} {:>8} {:>14.6e} {:>8}", r.h, r.steps, r.error, order)?;
        }
        Ok(())
    }
}

/// Global-error convergence study. Each step size in `h_list` (at least
/// three, strictly decreasing) is compared at `t_end` against a reference
/// run with `min(h_list) / 100`. Runs execute concurrently.
pub fn sweep(config: &RunConfig, h_list: &[f64]) -> Result<ConvergenceTable, RunError> {
    let bad = |msg: String| RunError::Config(ConfigError::Semantic {
        field: "sweep.h".into(),
        message: msg,
    });
    if h_list.len() < 3 {
        return Err(bad(format!("need at least 3 step sizes, got {}", h_list.len())));
    }
    if h_list.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(bad("step sizes must be positive and finite".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(bad("step sizes must be strictly decreasing".into()));
    }
    let h_ref = h_list[h_list.len() - 1] / 100.0;

    let run_at = |h: f64| -> Result<(usize, nalgebra::DVector<f64>), RunError> {
        let mut params = config.integrator;
        params.h = h;
        params.validate().map_err(|e| bad(e.to_string()))?;
        let input = config.input.signal();
        let x = propagate(&config.system, &config.initial, &params, input.as_ref())
            .map_err(|source| RunError::SweepStep { h, source })?;
        Ok((params.step_sizes().len(), x.to_vector()))
    };

    let mut all_h = h_list.to_vec();
    all_h.push(h_ref);
    let results: Vec<Result<(usize, nalgebra::DVector<f64>), RunError>> = std::thread::scope(|s| {
        let handles: Vec<_> = all_h.iter().map(|&h| s.spawn(move || run_at(h))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let (_, reference) = results.pop().expect("reference run present");

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(h_list.len());
    for (&h, (steps, x)) in h_list.iter().zip(results) {
        let error = (x - &reference).norm();
        let order = rows
            .last()
            .map(|prev| (prev.error / error).ln() / (prev.h / h).ln());
        rows.push(ConvergenceRow {
            h,
            steps,
            error,
            order,
        });
    }
    Ok(ConvergenceTable {
        scheme: config.integrator.scheme,
        t_end: config.integrator.t_end,
        h_ref,
        rows,
    })
}

pub fn write_sweep_csv(path: &Path, table: &ConvergenceTable) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    let write = |w: &mut csv::Writer<File>| -> Result<(), csv::Error> {
        w.write_record(["h", "steps", "error", "order"])?;
        for r in &table.rows {
            w.write_record([
                format!("{:.16e}", r.h),
                r.steps.to_string(),
                format!("{:.16e}", r.error),
                r.order.map_or(String::new(), |o| format!("{o:.16e}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| output_error(path, e))
}
