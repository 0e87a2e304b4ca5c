use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Probability mass leaks past the truncated Fock space.
    #[error("truncation error: {what} carries mass {mass:.3e} beyond tolerance {tolerance:.1e} (n_max = {n_max})")]
    Truncation {
        what: &'static str,
        mass: f64,
        tolerance: f64,
        n_max: usize,
    },

    /// Moments that divide by the mean were requested for an empty distribution.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Operation is not defined for this gain mechanism.
    #[error("operation `{operation}` is not defined for the {kind} model")]
    ModelMismatch {
        operation: &'static str,
        kind: &'static str,
    },

    /// A formula left its domain of validity (vanishing amplitude, singular denominator).
    #[error("domain error: {0}")]
    Domain(String),

    /// The truncation is too large for the requested operation or the model.
    #[error("size guard: n_max = {n_max} exceeds limit {limit} ({reason})")]
    SizeGuard {
        n_max: usize,
        limit: usize,
        reason: &'static str,
    },

    #[error("convergence failure: {0}")]
    Convergence(String),

    /// The adaptive integrator could not make progress.
    #[error("stiffness error: step size {step:.3e} collapsed at t = {time:.6e}")]
    Stiffness { step: f64, time: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("missing field `{0}`")]
    MissingField(&'static str),

    /// The repeated atom measurement did not terminate.
    #[error("atom cycle did not terminate after {0} upper-state outcomes")]
    NonTermination(u64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
