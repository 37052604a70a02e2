use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spin must be a positive half-integer, got {0}")]
    InvalidSpin(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("invariant `{invariant}` violated at t = {time}: value {value:e} (step too large?)")]
    InvariantViolation {
        invariant: &'static str,
        time: f64,
        value: f64,
    },

    #[error("group action overflow: log-factor {0:e} is not representable (step too large?)")]
    Overflow(f64),

    #[error("state norm collapsed to {norm:e} at step {step}")]
    NormCollapse { step: usize, norm: f64 },

    #[error("trajectory {index} aborted: {source}")]
    TrajectoryAborted {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("feasibility cap exceeded: dimension {dim} > {cap}")]
    TooLarge { dim: usize, cap: usize },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
