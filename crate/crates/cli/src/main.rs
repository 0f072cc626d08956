use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elastoph::Scheme;
use elastoph_cli::config::{self, Overrides, RunConfig};
use elastoph_cli::run::{self, RunTargets};
use elastoph_cli::{ConfigError, RunError};

#[derive(Parser)]
#[command(name = "elastoph", version, about = "Energy-momentum conserving simulation of hyperelastic mass-spring systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate, write the trajectory CSV and the conservation report.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV path (overrides `output.trajectory`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report path (overrides `output.report`).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Integrate and report conservation only; no trajectory file.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Convergence study against a reference run with min(h) / 100.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Strictly decreasing step sizes, comma separated.
        #[arg(long = "steps", value_delimiter = ',', default_values_t = [4e-3, 2e-3, 1e-3])]
        steps: Vec<f64>,
        /// Optional CSV file for the convergence table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    DiscreteGradient,
    ImplicitMidpoint,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::DiscreteGradient => Scheme::DiscreteGradient,
            SchemeArg::ImplicitMidpoint => Scheme::ImplicitMidpoint,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Configuration file; the built-in spring pendulum when omitted.
    config: Option<PathBuf>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    newton_tol: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => config::load_config(path)?,
            None => config::parse_config(config::PENDULUM_CONFIG)?,
        };
        cfg.apply_overrides(&Overrides {
            h: self.h,
            t_end: self.t_end,
            scheme: self.scheme.map(Scheme::from),
            newton_tol: self.newton_tol,
        })?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    let stdout = std::io::stdout();
    match cli.command {
        Command::Simulate { common, out, report } => {
            let cfg = common.load()?;
            let targets = RunTargets {
                trajectory: out.or_else(|| cfg.output.trajectory.clone()),
                report: report.or_else(|| cfg.output.report.clone()),
            };
            run::run(&cfg, &targets, stdout.lock())
        }
        Command::Check { common, report } => {
            let cfg = common.load()?;
            let targets = RunTargets {
                trajectory: None,
                report,
            };
            run::run(&cfg, &targets, stdout.lock())
        }
        Command::Sweep { common, steps, out } => {
            let cfg = common.load()?;
            let table = run::sweep(&cfg, &steps)?;
            if let Some(path) = &out {
                run::write_sweep_csv(path, &table)?;
            }
            print!("{table}");
            Ok(run::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
