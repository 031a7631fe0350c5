use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{requested} lies outside the source range {available}")]
    OutOfRange { requested: String, available: String },

    #[error("matrix `{label}` is rank deficient")]
    Singular { label: String },

    #[error("invalid filter: transmittance {value} at index {index} must be positive")]
    InvalidFilter { index: usize, value: f64 },

    #[error("near-singular filter: transmittance {value} at index {index} is below {floor}")]
    NearSingularFilter { index: usize, value: f64, floor: f64 },

    #[error("could not project onto the feasible set (max violation {violation:.3e})")]
    ProjectionFailure { violation: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NearSingularFilter { .. }
                | Error::ProjectionFailure { .. }
        )
    }

    /// True for failures caused by reading or validating datasets.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Io { .. } | Error::GridMismatch(_) | Error::OutOfRange { .. }
        )
    }
}
