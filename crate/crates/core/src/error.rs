use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation and identification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("friction law evaluated at non-finite flux {value} (step {step})")]
    DomainExcursion { value: f64, step: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical breakdown in {context} at iteration {iteration}")]
    Breakdown { context: &'static str, iteration: usize },

    #[error("singular factorization: pivot {pivot} at row {row}")]
    Singular { row: usize, pivot: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
