use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A request exceeds a configured size cap.
    #[error("cap exceeded: {0}")]
    CapExceeded(String),

    /// A conditional probability was requested on an event with no mass.
    #[error("empty condition: {0}")]
    EmptyCondition(String),

    /// A per-integer byte counter would have wrapped.
    #[error("counter overflow at n = {n} for set {set}")]
    CounterOverflow { n: u64, set: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
