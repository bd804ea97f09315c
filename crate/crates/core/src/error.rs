use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    NotConverged {
        sweeps: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("sublevel set at level {0} is empty")]
    EmptySublevel(f64),

    #[error("no level up to {0} passed the invariance check")]
    NoInvariantLevel(f64),

    #[error("framework invariant violated: {0}")]
    Invariant(String),

    #[error("malformed value grid artifact: {0}")]
    Artifact(String),

    #[error("malformed run log at line {line}: {message}")]
    Log { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
