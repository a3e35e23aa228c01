use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input on the command line or in a config file.
    #[error("usage error: {0}")]
    Usage(String),

    /// Inconsistent configuration, e.g. parameters passed to the wrong model.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// The sampler gave up because the tolerance cannot realistically be met.
    #[error(
        "sampler aborted at tolerance {epsilon:e}: acceptance rate {rate:e} over the last \
         {window} proposals is below the floor {floor:e}"
    )]
    AcceptanceFloor {
        epsilon: f64,
        rate: f64,
        window: u64,
        floor: f64,
    },

    #[error("degenerate posterior: {0}")]
    Degenerate(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for this error: 2 usage, 3 validation, 4 sampler abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Validation(_) | Error::Parse { .. } | Error::Degenerate(_) => 3,
            Error::AcceptanceFloor { .. } => 4,
            Error::Io { .. } | Error::Csv(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
