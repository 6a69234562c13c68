use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent caller-supplied data.
    #[error("invalid input: {0}")]
    Input(String),

    /// The network graph itself is unusable (e.g. disconnected).
    #[error("structural error: {0}")]
    Structural(String),

    #[error("infeasible dispatch: {0}")]
    Infeasible(String),

    /// Lemke terminated on a secondary ray; carries the complementary basis at that point.
    #[error("LCP ray termination after {pivots} pivots")]
    RayTermination { pivots: usize, basis: Vec<usize> },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_)
            | Error::Structural(_)
            | Error::Usage(_)
            | Error::Parse { .. }
            | Error::Config(_) => 2,
            Error::Infeasible(_) | Error::RayTermination { .. } | Error::SolverFailure(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}
