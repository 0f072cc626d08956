//! Trajectory CSV files.
//!
//! Columns, in order: `t`, positions `q1x,q1y,q1z,...`, velocities
//! `v1x,...`, strains `C1,...`, then `H, T_kin, V_int, V_ext, L1, L2, L3,
//! g_inf_norm, newton_iters, power_supplied`. Floats are written with 17
//! significant digits so that files round-trip exactly.

use std::io::{Read, Write};

use elastoph::{State, StepDiagnostics, StepStats, Trajectory};
use nalgebra::DVector;
use thiserror::Error;

const TRAILER: [&str; 10] = [
    "H",
    "T_kin",
    "V_int",
    "V_ext",
    "L1",
    "L2",
    "L3",
    "g_inf_norm",
    "newton_iters",
    "power_supplied",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("row {row}, column `{column}`: {message}")]
    Field {
        row: usize,
        column: String,
        message: String,
    },
}

/// Column names for a system with `n_points` points and `n_elements` elements.
pub fn header(n_points: usize, n_elements: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["q", "v"] {
        for k in 1..=n_points {
            for axis in ["x", "y", "z"] {
                cols.push(format!("{prefix}{k}{axis}"));
            }
        }
    }
    cols.extend((1..=n_elements).map(|i| format!("C{i}")));
    cols.extend(TRAILER.iter().map(|s| s.to_string()));
    cols
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<(), CsvError> {
    let (n_points, n_elements) = traj
        .states
        .first()
        .map_or((0, 0), |x| (x.q.len() / 3, x.c.len()));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n_points, n_elements))?;
    let mut row: Vec<String> = Vec::new();
    for (x, d) in traj.states.iter().zip(&traj.diagnostics) {
        row.clear();
        row.push(num(d.t));
        row.extend(x.q.iter().chain(x.v.iter()).chain(x.c.iter()).map(|&v| num(v)));
        row.extend(
            [d.hamiltonian, d.kinetic, d.internal, d.external]
                .into_iter()
                .chain(d.angular_momentum)
                .chain([d.kinematic_residual])
                .map(num),
        );
        row.push(d.newton.iterations.to_string());
        row.push(num(d.power_supplied));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// A trajectory read back from CSV together with the system size implied by
/// its header.
#[derive(Debug, Clone)]
pub struct LoadedTrajectory {
    pub n_points: usize,
    pub n_elements: usize,
    pub trajectory: Trajectory,
}

fn infer_sizes(names: &[&str]) -> Result<(usize, usize), CsvError> {
    if names.first() != Some(&"t") {
        return Err(CsvError::Header("first column must be `t`".into()));
    }
    let q_cols = names[1..].iter().take_while(|n| n.starts_with('q')).count();
    if q_cols == 0 || q_cols % 3 != 0 {
        return Err(CsvError::Header(format!(
            "position columns must come in triples, found {q_cols}"
        )));
    }
    let n_points = q_cols / 3;
    let n_elements = names
        .get(1 + 6 * n_points..)
        .unwrap_or(&[])
        .iter()
        .take_while(|n| n.starts_with('C'))
        .count();
    Ok((n_points, n_elements))
}

/// Parses a trajectory CSV written by [`write_trajectory`].
///
/// Newton residual norms are not stored; reloaded steps report them as zero.
/// Port records are left empty.
pub fn read_trajectory<R: Read>(input: R) -> Result<LoadedTrajectory, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let (n_points, n_elements) = infer_sizes(&refs)?;
    let expected = header(n_points, n_elements);
    if names != expected {
        return Err(CsvError::Header(format!(
            "expected columns {}",
            expected.join(",")
        )));
    }
    let n = 3 * n_points;

    let mut traj = Trajectory::default();
    for (row_idx, record) in r.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        if record.len() != expected.len() {
            return Err(CsvError::Field {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", expected.len(), record.len()),
            });
        }
        let field = |col: usize| -> Result<f64, CsvError> {
            record[col].trim().parse::<f64>().map_err(|e| CsvError::Field {
                row,
                column: expected[col].clone(),
                message: e.to_string(),
            })
        };
        let iters_col = expected.len() - 2;
        let values: Vec<f64> = (0..iters_col).map(field).collect::<Result<_, _>>()?;
        let iterations = record[iters_col].trim().parse::<usize>().map_err(|e| CsvError::Field {
            row,
            column: expected[iters_col].clone(),
            message: e.to_string(),
        })?;
        let power = field(expected.len() - 1)?;

        let state = State::new(
            DVector::from_column_slice(&values[1..1 + n]),
            DVector::from_column_slice(&values[1 + n..1 + 2 * n]),
            DVector::from_column_slice(&values[1 + 2 * n..1 + 2 * n + n_elements]),
        );
        let tail = &values[1 + 2 * n + n_elements..];
        traj.diagnostics.push(StepDiagnostics {
            t: values[0],
            hamiltonian: tail[0],
            kinetic: tail[1],
            internal: tail[2],
            external: tail[3],
            angular_momentum: [tail[4], tail[5], tail[6]],
            kinematic_residual: tail[7],
            power_supplied: power,
            newton: StepStats {
                iterations,
                final_residual_norm: 0.0,
                converged: true,
            },
        });
        traj.states.push(state);
    }
    Ok(LoadedTrajectory {
        n_points,
        n_elements,
        trajectory: traj,
    })
}
