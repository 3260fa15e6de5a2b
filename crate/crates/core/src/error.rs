use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unknown experiment `{name}` (known: {known})")]
    UnknownExperiment { name: String, known: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Short machine-readable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::IllPosed(_) => "ill-posed",
            Error::NotPositiveDefinite(_) => "not-positive-definite",
            Error::UnknownExperiment { .. } => "unknown-experiment",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Serialization(_) => "serialization",
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
