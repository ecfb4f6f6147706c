use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("timestep {t} out of range 1..={max}")]
    Index { t: usize, max: usize },

    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible hull: {0}")]
    InfeasibleHull(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Index { .. } => 1,
            Error::Parse { .. } | Error::Format(_) | Error::Io { .. } => 2,
            Error::Numerical(_)
            | Error::Divergence { .. }
            | Error::Domain(_)
            | Error::InfeasibleHull(_)
            | Error::UndefinedScore(_) => 3,
        }
    }
}
