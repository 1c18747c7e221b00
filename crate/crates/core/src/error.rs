use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("capacity exceeded: {what} is {size}, cap is {cap}")]
    Capacity { what: &'static str, size: f64, cap: f64 },
    #[error("constraint set is empty")]
    EmptySet,
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("degenerate thickness: mu = 0, restrict attention to the well-conditioned parts")]
    DegenerateThickness,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
