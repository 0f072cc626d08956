use thiserror::Error;

/// Errors raised while building systems, evaluating energies or stepping in time.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The logarithmic stored energy is only defined for positive strains.
    #[error("strain of element {element} left the admissible domain (C = {value:e} <= 0)")]
    StrainDomain { element: usize, value: f64 },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid integrator parameters: {0}")]
    InvalidParams(String),

    #[error("initial strain of element {element} is inconsistent with the positions (|g| = {residual:e} > {tolerance:e})")]
    InconsistentInitialStrain {
        element: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("Newton iteration did not converge after {iterations} iterations (residual norm {residual_norm:e})")]
    NonConvergence {
        iterations: usize,
        residual_norm: f64,
    },

    #[error("singular Newton matrix in iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("step {step} starting at t = {time} failed: {source}")]
    StepFailed {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory is empty")]
    EmptyTrajectory,
}

impl Error {
    /// Strips any [`Error::StepFailed`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
