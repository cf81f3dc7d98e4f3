use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("{what} = {value} is outside the domain {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("experiment design failed at step {step}: {reason}")]
    DesignFailure {
        step: usize,
        reason: String,
        /// Rank of the stacked prefix after each completed step.
        ranks: Vec<usize>,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }
}
