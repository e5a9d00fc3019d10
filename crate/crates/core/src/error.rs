use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input arrays disagree on a shape.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input violates a domain invariant (labels, counts, index sets).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Bad hyperparameter or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A linear system could not be solved to working precision.
    #[error("singular system: {0}")]
    Singular(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical kernels rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Singular(_) | Error::Numeric(_))
    }
}
