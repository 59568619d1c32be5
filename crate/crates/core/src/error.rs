use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A partition is finer than, or misaligned with, the data it is applied to.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A numerical routine failed (factorization, degenerate statistics).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Root bracketing or estimation failed; carries the diagnostics.
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: u64, column: u64, message: String },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn resolution(msg: impl Into<String>) -> Self {
        Error::Resolution(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
