use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants split into two groups: caller mistakes (bad inputs, malformed
/// files) and internal/IO failures. [`Error::is_validation`] tells them apart,
/// which the CLI uses to choose its exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },

    #[error("mesh is not watertight: edge ({0}, {1}) is shared by {2} face(s)")]
    OpenEdge(usize, usize, usize),

    #[error("missing loss term `{0}`")]
    MissingTerm(&'static str),

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs rather than by the
    /// environment or a bug. A missing input file counts as the caller's.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Internal(_) => false,
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
