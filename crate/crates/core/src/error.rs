use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A structured file did not match its schema.
    #[error("{path}: schema error at line {line}, column {column}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    /// Input parsed but violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Numeric failure: zero vectors, mismatched dimensions, non-finite values.
    #[error("computation error: {0}")]
    Computation(String),

    /// Unusable input data such as an empty image.
    #[error("input error: {0}")]
    Input(String),

    /// Failure inside an inference backend, or while constructing one.
    #[error("backend error: {0}")]
    Backend(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Schema {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2 for anything the user can fix in their inputs, 3 for backend failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend(_) => 3,
            _ => 2,
        }
    }
}
