//! Crate-wide error type. Every fallible public operation returns [`Result`].

use thiserror::Error;

/// Unified error for all floodcast operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation was handed data that violates its contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two containers that must agree in shape do not.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    /// A numeric routine produced NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// An iterative solver failed to reach its stopping criterion.
    #[error("solver failure in {context}: {message}")]
    Solver { context: String, message: String },

    /// Filesystem-level failure, annotated with the path involved.
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A file existed but its contents do not match the expected format.
    #[error("parse failure in {path}: {message}")]
    Parse { path: String, message: String },

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidInput`] from any displayable message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Shorthand for [`Error::Io`] carrying the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Shorthand for [`Error::Parse`].
    pub fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: msg.into(),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
