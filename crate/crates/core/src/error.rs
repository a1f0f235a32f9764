use thiserror::Error;

/// Errors produced by the occupancy toolkit.
///
/// The three variants map onto distinct CLI exit codes, so callers can tell a
/// malformed input apart from a computation that was refused for size.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input failed validation (bad parameter, malformed sequence, ...).
    #[error("validation error: {0}")]
    Validation(String),
    /// The requested computation exceeds a resource guard.
    #[error("resource limit: {0}")]
    Resource(String),
    /// The model or estimate is degenerate for the requested operation.
    #[error("degenerate: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
