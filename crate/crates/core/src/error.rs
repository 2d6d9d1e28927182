use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition of an operation was violated.
    #[error("{module}: {message}")]
    Precondition { module: &'static str, message: String },

    /// Two inputs were sampled on incompatible grids.
    #[error("{module}: grid mismatch: {message}")]
    GridMismatch { module: &'static str, message: String },

    /// A file did not follow the expected layout.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn precondition(module: &'static str, message: impl Into<String>) -> Self {
        Error::Precondition {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn mismatch(module: &'static str, message: impl Into<String>) -> Self {
        Error::GridMismatch {
            module,
            message: message.into(),
        }
    }
}
