//! Domain-decomposed extreme learning machines on the unit square.
//!
//! Local tanh networks are coupled through an interface unknown `μ` and the
//! resulting block least-squares system is reduced to the interface by a
//! Schur complement, optionally with a cross-point coarse space and a
//! Neumann-to-Dirichlet weighting of the flux mismatch.

pub mod assembly;
pub mod error;
pub mod features;
pub mod field;
pub mod geometry;
pub mod metrics;
pub mod problems;
pub mod solvers;

pub use error::{DdelmError, Result};
