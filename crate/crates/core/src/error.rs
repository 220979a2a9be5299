use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::io::config::ConfigError;
use crate::protocol::SegmenterError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{location}: {message}")]
    Validation { location: String, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("tracking aborted for sequence {sequence}: {source}")]
    TrackingAbort {
        sequence: String,
        #[source]
        source: SegmenterError,
    },
    #[error("missing inputs: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingInputs(Vec<PathBuf>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for a tracking abort, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TrackingAbort { .. } => 2,
            _ => 1,
        }
    }
}
