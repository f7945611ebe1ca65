//! UAV dynamics, labeled regions and scenario files.
//!
//! The vehicle is a double integrator per spatial axis: the state is
//! position followed by velocity, the control is an acceleration command.
//! Regions are axis-aligned boxes carrying a semantic role.

mod dynamics;
mod region;
mod scenario;

pub use dynamics::{build_dynamics, simulate, DynamicsModel, Trajectory};
pub use region::{avoidance_formula, membership_atoms, Region, RegionTable, Role};
pub use scenario::{load_scenario, save_scenario, BoxBounds, InitialState, Scenario};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WorldError {
    #[error("unsupported spatial dimension {0} (expected 1, 2 or 3)")]
    BadDims(usize),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("schema error at `{field}`: {reason}")]
    SchemaError { field: String, reason: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
}
