//! Quantum-limited laser linewidths from truncated Fock-space master equations.

pub mod diagnostics;
pub mod dynamics;
pub mod eigen;
mod error;
pub mod fock;
pub mod models;
pub mod ode;
pub mod trajectories;

pub use error::{Error, Result};
