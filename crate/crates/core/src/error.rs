use thiserror::Error;

/// Errors raised by the mechanism, estimators and simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input (bad index, non-finite value, shape mismatch).
    #[error("invalid input: {0}")]
    Input(String),
    /// An operation was called at the wrong time or on the wrong kind of agent.
    #[error("usage error: {0}")]
    Usage(String),
    /// A hypothesis of a bound or construction is not satisfied.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The instance cannot support the requested schedule.
    #[error("instance error: {0}")]
    Instance(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
