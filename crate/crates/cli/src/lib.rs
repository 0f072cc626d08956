//! Configuration files, trajectory I/O, reports and convergence sweeps for
//! the `elastoph` command-line tool.

pub mod config;
pub mod csv_io;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, InputSelection, Overrides, RunConfig};
pub use csv_io::{read_trajectory, write_trajectory, CsvError, LoadedTrajectory};
pub use run::{run, simulate, sweep, ConvergenceTable, RunError, RunOutcome, RunTargets};
