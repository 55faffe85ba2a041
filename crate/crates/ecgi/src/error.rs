//! Crate-wide error type.

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the ECGI laboratory.
///
/// Variants are grouped by failure class rather than by module: callers
/// mostly care whether a problem is a caller mistake (`InvalidArgument`,
/// `ShapeMismatch`), a numerical breakdown (`Numerical`), or an artifact
/// problem (`Io`, `Format`).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument value was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor or matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A computation produced or encountered non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration could not be parsed or failed schema validation.
    #[error("config error: {0}")]
    Config(String),

    /// An on-disk artifact (container, checkpoint, manifest) is malformed.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidArgument`] from anything displayable.
    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Error::InvalidArgument(msg.to_string())
    }

    /// Shorthand for [`Error::ShapeMismatch`].
    pub fn shape(msg: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch(msg.to_string())
    }

    /// Shorthand for [`Error::Numerical`].
    pub fn numerical(msg: impl std::fmt::Display) -> Self {
        Error::Numerical(msg.to_string())
    }

    /// Shorthand for [`Error::Format`].
    pub fn format(path: impl std::fmt::Display, reason: impl std::fmt::Display) -> Self {
        Error::Format {
            path: path.to_string(),
            reason: reason.to_string(),
        }
    }
}
