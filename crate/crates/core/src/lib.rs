//! Port-Hamiltonian simulation of hyperelastic mass-spring networks.
//!
//! - [`model`]: systems, states, energies, efforts and structure matrices.
//! - [`dgrad`]: Greenspan and Gonzalez discrete gradients.
//! - [`integrator`]: the discrete-gradient one-step scheme, Newton solver and
//!   an implicit midpoint baseline.
//! - [`diagnostics`]: conservation bookkeeping and reports.
//!
//! ```
//! use elastoph::{integrate, analyze, ConservationTolerances, ElasticElement,
//!                IntegratorParams, MechanicalSystem, ZeroInput};
//! use nalgebra::{DVector, Vector3};
//!
//! # fn main() -> elastoph::Result<()> {
//! let sys = MechanicalSystem::new(
//!     vec![1.0],
//!     vec![ElasticElement::anchored(0, 1.0e4, 1.0)?],
//!     Vector3::new(0.0, 0.0, -9.81),
//! )?;
//! let x0 = sys.consistent_state(
//!     DVector::from_vec(vec![1.1, 0.0, 0.0]),
//!     DVector::from_vec(vec![0.0, 1.0, 1.0]),
//! )?;
//! let params = IntegratorParams::new(1e-2, 0.0, 4.0)?;
//! let traj = integrate(&sys, &x0, &params, &ZeroInput)?;
//! let report = analyze(&sys, &traj, Vector3::z(), &ConservationTolerances::default())?;
//! assert!(report.passed());
//! # Ok(())
//! # }
//! ```

pub mod dgrad;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod model;

pub use dgrad::{DGradParams, ScalarPotential};
pub use diagnostics::{analyze, ConservationReport, ConservationTolerances, StepDiagnostics};
pub use error::{Error, Result};
pub use integrator::{
    integrate, solve_step, InputSignal, IntegratorParams, JacobianMode, Scheme, StepStats,
    Trajectory, ViscousDamping, ZeroInput,
};
pub use model::{
    CanonicalState, Efforts, ElasticElement, EnergyParts, ExternalPotential, MechanicalSystem,
    State, UniformGravity,
};
