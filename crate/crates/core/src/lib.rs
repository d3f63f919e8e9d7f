//! Entanglement distillation workbench.
//!
//! Bipartite states and operations on finite-dimensional spaces, the
//! isotropic-state protocols that reduce dimension and raise fidelity,
//! entanglement bounds for isotropic states, and the rate accounting that
//! turns a trace of protocol outcomes into distillation rates.

pub mod bounds;
pub mod distillation;
pub mod error;
pub mod exec;
pub mod json;
pub mod linalg;
pub mod operations;
pub mod protocols;
pub mod random;
pub mod states;

pub use error::{Error, Result};
pub use exec::Exec;
pub use linalg::{BipartiteLabel, CMatrix, CVector, DensityOperator, Label, Subsystem, C64};
