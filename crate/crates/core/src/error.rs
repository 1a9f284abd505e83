use thiserror::Error;

/// Errors surfaced by validation and domain checks across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally inconsistent inputs (shape, labeling, simplex violations).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Vector dimensions disagree between data and parameters.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An enumeration oracle was asked for an instance above its hard guard.
    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    /// A transition probability used by a state path is exactly zero.
    #[error("used transition probability is zero at step {step} ({from} -> {to})")]
    ZeroTransition { step: usize, from: usize, to: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
