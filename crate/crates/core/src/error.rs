use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("paths {first} and {second} both quantize to grid index {index}")]
    IndexCollision {
        index: usize,
        first: usize,
        second: usize,
    },

    #[error("path {path} at distance {distance} m falls outside the distance grid (N = {grid_len})")]
    OutOfGrid {
        path: usize,
        distance: f64,
        grid_len: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("column {0} has zero norm")]
    DegenerateColumn(usize),

    #[error("normal equations are numerically singular")]
    SingularSystem,

    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("provenance mismatch: {0}")]
    ProvenanceMismatch(String),

    #[error("sample {0} has an all-zero ground truth; NMSE is undefined")]
    ZeroTruth(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

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

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
