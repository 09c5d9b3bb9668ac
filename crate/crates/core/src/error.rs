use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The order-1 Green's function has a jump at the origin.
    #[error("evaluation at discontinuity (order-1 Green's function at x = 0 mod 2π)")]
    Discontinuity,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
