//! Run configuration files.
//!
//! Configurations are TOML documents with a required `version` key:
//!
//! ```toml
//! version = 1
//!
//! [system]
//! gravity = [0.0, 0.0, -9.81]          # m/s^2, default zero
//! points = [{ mass = 1.0 }]            # kg, one entry per point
//! # input_map = [[...], ...]           # 3N rows, default identity
//!
//! [[system.elements]]
//! stiffness = 1.0e4                    # N
//! rest_length = 1.0                    # m
//! endpoints = [0]                      # [i]: anchored at the origin, [i, j]: q_i - q_j
//! # coefficients = [[0, 1.0], [1, -1.0]]  # general (point, a) pairs instead of endpoints
//!
//! [initial]
//! q = [1.1, 0.0, 0.0]
//! v = [0.0, 1.0, 1.0]
//! # C = [1.21]                         # default: strains computed from q
//! # consistency_tol = 1e-12
//!
//! [integrator]
//! h = 1e-2
//! t0 = 0.0
//! t_end = 4.0
//! newton_tol = 1e-9
//! newton_max_iters = 50
//! scheme = "discrete_gradient"         # or "implicit_midpoint"
//! jacobian = "finite_difference"       # or "analytic"
//! fallback_threshold = 1e-10
//!
//! [input]
//! kind = "none"                        # or "viscous" with `damping = 0.5`
//!
//! [output]
//! trajectory = "trajectory.csv"
//! report = "report.toml"
//!
//! [report]
//! energy_tol = 1e-8
//! angular_momentum_tol = 1e-8
//! kinematic_tol = 1e-8
//! ```
//!
//! Point indices are zero-based.

use std::fmt;
use std::path::{Path, PathBuf};

use elastoph::integrator::ConsistencyPolicy;
use elastoph::{
    ConservationTolerances, DGradParams, ElasticElement, InputSignal, IntegratorParams,
    JacobianMode, MechanicalSystem, Scheme, State, ViscousDamping, ZeroInput,
};
use nalgebra::{DMatrix, DVector, Vector3};
use serde::Deserialize;
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

/// The built-in spring pendulum benchmark.
pub const PENDULUM_CONFIG: &str = include_str!("../configs/pendulum.cfg");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{field}`: {message}")]
    Semantic { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn semantic(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Semantic {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    system: RawSystem,
    initial: RawInitial,
    integrator: RawIntegrator,
    #[serde(default)]
    input: RawInput,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    report: RawReport,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(default)]
    gravity: [f64; 3],
    points: Vec<RawPoint>,
    #[serde(default)]
    elements: Vec<RawElement>,
    input_map: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    mass: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    stiffness: f64,
    rest_length: f64,
    endpoints: Option<Vec<usize>>,
    coefficients: Option<Vec<(usize, f64)>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    q: Vec<f64>,
    v: Vec<f64>,
    #[serde(rename = "C")]
    c: Option<Vec<f64>>,
    #[serde(default = "default_consistency_tol")]
    consistency_tol: f64,
}

fn default_consistency_tol() -> f64 {
    IntegratorParams::DEFAULT_CONSISTENCY_TOL
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    h: f64,
    #[serde(default)]
    t0: f64,
    t_end: f64,
    #[serde(default = "default_newton_tol")]
    newton_tol: f64,
    #[serde(default = "default_newton_max_iters")]
    newton_max_iters: usize,
    #[serde(default = "default_scheme")]
    scheme: Scheme,
    #[serde(default = "default_jacobian")]
    jacobian: JacobianMode,
    #[serde(default = "default_fallback")]
    fallback_threshold: f64,
}

fn default_newton_tol() -> f64 {
    IntegratorParams::DEFAULT_NEWTON_TOL
}
fn default_newton_max_iters() -> usize {
    IntegratorParams::DEFAULT_NEWTON_MAX_ITERS
}
fn default_scheme() -> Scheme {
    Scheme::DiscreteGradient
}
fn default_jacobian() -> JacobianMode {
    JacobianMode::FiniteDifference
}
fn default_fallback() -> f64 {
    DGradParams::DEFAULT_FALLBACK_THRESHOLD
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawInput {
    #[default]
    None,
    Viscous {
        damping: f64,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    trajectory: Option<PathBuf>,
    report: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    #[serde(default = "default_report_tol")]
    energy_tol: f64,
    #[serde(default = "default_report_tol")]
    angular_momentum_tol: f64,
    #[serde(default = "default_report_tol")]
    kinematic_tol: f64,
}

fn default_report_tol() -> f64 {
    1e-8
}

impl Default for RawReport {
    fn default() -> Self {
        Self {
            energy_tol: default_report_tol(),
            angular_momentum_tol: default_report_tol(),
            kinematic_tol: default_report_tol(),
        }
    }
}

/// Non-potential input applied during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSelection {
    None,
    /// `u = -d y`.
    Viscous { damping: f64 },
}

impl InputSelection {
    pub fn signal(&self) -> Box<dyn InputSignal> {
        match *self {
            InputSelection::None => Box::new(ZeroInput),
            InputSelection::Viscous { damping } => Box::new(ViscousDamping { damping }),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, InputSelection::None)
    }
}

impl fmt::Display for InputSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSelection::None => f.write_str("none"),
            InputSelection::Viscous { damping } => write!(f, "viscous (d = {damping})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: MechanicalSystem,
    pub initial: State,
    pub integrator: IntegratorParams,
    pub input: InputSelection,
    pub output: OutputPaths,
    pub tolerances: ConservationTolerances,
}

/// Command-line overrides of configuration scalars.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    pub scheme: Option<Scheme>,
    pub newton_tol: Option<f64>,
}

impl RunConfig {
    /// Gravity axis used for the angular momentum check.
    pub fn gravity_axis(&self) -> Vector3<f64> {
        self.system.gravity().unwrap_or_else(Vector3::zeros)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        let mut p = self.integrator;
        if let Some(h) = o.h {
            p.h = h;
        }
        if let Some(t_end) = o.t_end {
            p.t_end = t_end;
        }
        if let Some(scheme) = o.scheme {
            p.scheme = scheme;
        }
        if let Some(tol) = o.newton_tol {
            p.newton_tol = tol;
        }
        validate_integrator(&p)?;
        self.integrator = p;
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = offset - before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = match inner.span() {
            Some(s) => {
                let (line, _) = line_col(text, s.start);
                format!("{} (line {line})", inner.message().trim())
            }
            None => inner.message().trim().to_string(),
        };
        semantic(if path == "." { "<root>".into() } else { path }, message)
    })?;
    build(raw)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn finite(field: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(semantic(field, format!("must be finite, got {x}")))
    }
}

fn positive(field: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(semantic(field, format!("must be positive and finite, got {x}")))
    }
}

fn vector(field: &str, values: &[f64], expected: usize) -> Result<DVector<f64>, ConfigError> {
    if values.len() != expected {
        return Err(semantic(
            field,
            format!("expected {expected} entries, found {}", values.len()),
        ));
    }
    for (i, &x) in values.iter().enumerate() {
        finite(&format!("{field}[{i}]"), x)?;
    }
    Ok(DVector::from_column_slice(values))
}

fn build_element(i: usize, raw: &RawElement, n_points: usize) -> Result<ElasticElement, ConfigError> {
    let field = |name: &str| format!("system.elements[{i}].{name}");
    let stiffness = positive(&field("stiffness"), raw.stiffness)?;
    let rest_length = positive(&field("rest_length"), raw.rest_length)?;
    let check_point = |name: &str, p: usize| {
        if p < n_points {
            Ok(p)
        } else {
            Err(semantic(
                field(name),
                format!("point index {p} out of range (system has {n_points} points)"),
            ))
        }
    };
    let coefficients = match (&raw.endpoints, &raw.coefficients) {
        (Some(_), Some(_)) => {
            return Err(semantic(
                field("endpoints"),
                "give either `endpoints` or `coefficients`, not both",
            ))
        }
        (None, None) => {
            return Err(semantic(
                field("endpoints"),
                "missing `endpoints` or `coefficients`",
            ))
        }
        (Some(ends), None) => match ends.as_slice() {
            [a] => vec![(check_point("endpoints", *a)?, 1.0)],
            [a, b] if a != b => vec![
                (check_point("endpoints", *a)?, 1.0),
                (check_point("endpoints", *b)?, -1.0),
            ],
            [_, _] => return Err(semantic(field("endpoints"), "endpoints must differ")),
            _ => {
                return Err(semantic(
                    field("endpoints"),
                    format!("expected 1 or 2 point indices, found {}", ends.len()),
                ))
            }
        },
        (None, Some(coeffs)) => {
            let mut out = Vec::with_capacity(coeffs.len());
            for (j, &(p, a)) in coeffs.iter().enumerate() {
                let name = format!("coefficients[{j}]");
                out.push((check_point(&name, p)?, finite(&field(&name), a)?));
            }
            out
        }
    };
    ElasticElement::new(stiffness, rest_length, coefficients)
        .map_err(|e| semantic(field("coefficients"), e.to_string()))
}

fn validate_integrator(p: &IntegratorParams) -> Result<(), ConfigError> {
    finite("integrator.t0", p.t0)?;
    finite("integrator.t_end", p.t_end)?;
    if p.t_end < p.t0 {
        return Err(semantic(
            "integrator.t_end",
            format!("must not precede t0 = {} (got {})", p.t0, p.t_end),
        ));
    }
    positive("integrator.h", p.h)?;
    if p.t_end > p.t0 && p.h > p.t_end - p.t0 {
        return Err(semantic(
            "integrator.h",
            format!("step size {} exceeds the horizon {}", p.h, p.t_end - p.t0),
        ));
    }
    positive("integrator.newton_tol", p.newton_tol)?;
    if p.newton_max_iters == 0 {
        return Err(semantic("integrator.newton_max_iters", "must be at least 1"));
    }
    positive("integrator.fallback_threshold", p.dgrad.fallback_threshold)?;
    p.validate()
        .map_err(|e| semantic("integrator", e.to_string()))
}

fn build(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    if raw.version != CONFIG_VERSION {
        return Err(semantic(
            "version",
            format!("unsupported version {} (expected {CONFIG_VERSION})", raw.version),
        ));
    }

    let sys_raw = &raw.system;
    if sys_raw.points.is_empty() {
        return Err(semantic("system.points", "at least one point is required"));
    }
    let masses = sys_raw
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| positive(&format!("system.points[{k}].mass"), p.mass))
        .collect::<Result<Vec<_>, _>>()?;
    let n_points = masses.len();
    let gravity = vector("system.gravity", &sys_raw.gravity, 3)?;
    let elements = sys_raw
        .elements
        .iter()
        .enumerate()
        .map(|(i, el)| build_element(i, el, n_points))
        .collect::<Result<Vec<_>, _>>()?;
    let n_elements = elements.len();
    let mut system = MechanicalSystem::new(
        masses,
        elements,
        Vector3::new(gravity[0], gravity[1], gravity[2]),
    )
    .map_err(|e| semantic("system", e.to_string()))?;

    if let Some(rows) = &sys_raw.input_map {
        let n = 3 * n_points;
        if rows.len() != n {
            return Err(semantic(
                "system.input_map",
                format!("expected {n} rows (one per velocity equation), found {}", rows.len()),
            ));
        }
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(semantic("system.input_map", "rows must not be empty"));
        }
        let mut b = DMatrix::zeros(n, cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(semantic(
                    format!("system.input_map[{r}]"),
                    format!("expected {cols} columns, found {}", row.len()),
                ));
            }
            for (c, &x) in row.iter().enumerate() {
                b[(r, c)] = finite(&format!("system.input_map[{r}][{c}]"), x)?;
            }
        }
        system = system
            .with_input_map(b)
            .map_err(|e| semantic("system.input_map", e.to_string()))?;
    }

    let init = &raw.initial;
    let q = vector("initial.q", &init.q, 3 * n_points)?;
    let v = vector("initial.v", &init.v, 3 * n_points)?;
    let consistency_tol = init.consistency_tol;
    if !(consistency_tol >= 0.0 && consistency_tol.is_finite()) {
        return Err(semantic(
            "initial.consistency_tol",
            format!("must be non-negative and finite, got {consistency_tol}"),
        ));
    }
    let c_tilde = system
        .strain_map(&q)
        .map_err(|e| semantic("initial.q", e.to_string()))?;
    let c = match &init.c {
        None => c_tilde,
        Some(c) => {
            let c = vector("initial.C", c, n_elements)?;
            for (i, (ci, ct)) in c.iter().zip(c_tilde.iter()).enumerate() {
                if (ci - ct).abs() > consistency_tol {
                    return Err(semantic(
                        format!("initial.C[{i}]"),
                        format!(
                            "inconsistent with initial.q: strain from positions is {ct}, given {ci} (tolerance {consistency_tol:e})"
                        ),
                    ));
                }
            }
            c
        }
    };
    if let Some(i) = c.iter().position(|&ci| ci.is_nan() || ci <= 0.0) {
        return Err(semantic(
            format!("initial.C[{i}]"),
            format!("strain must be positive, got {} (degenerate element)", c[i]),
        ));
    }

    let ri = &raw.integrator;
    let integrator = IntegratorParams {
        h: ri.h,
        t0: ri.t0,
        t_end: ri.t_end,
        newton_tol: ri.newton_tol,
        newton_max_iters: ri.newton_max_iters,
        dgrad: DGradParams {
            fallback_threshold: ri.fallback_threshold,
        },
        jacobian_mode: ri.jacobian,
        scheme: ri.scheme,
        consistency_tol,
        on_inconsistent: ConsistencyPolicy::Reject,
    };
    validate_integrator(&integrator)?;

    let input = match raw.input {
        RawInput::None => InputSelection::None,
        RawInput::Viscous { damping } => {
            if !(damping.is_finite() && damping >= 0.0) {
                return Err(semantic(
                    "input.damping",
                    format!("must be non-negative and finite, got {damping}"),
                ));
            }
            InputSelection::Viscous { damping }
        }
    };

    let tolerances = ConservationTolerances {
        energy: positive("report.energy_tol", raw.report.energy_tol)?,
        angular_momentum: positive("report.angular_momentum_tol", raw.report.angular_momentum_tol)?,
        kinematic: positive("report.kinematic_tol", raw.report.kinematic_tol)?,
        check_angular_momentum: input.is_none(),
        ..ConservationTolerances::default()
    };

    Ok(RunConfig {
        system,
        initial: State::new(q, v, c),
        integrator,
        input,
        output: OutputPaths {
            trajectory: raw.output.trajectory,
            report: raw.output.report,
        },
        tolerances,
    })
}
