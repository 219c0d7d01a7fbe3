use thiserror::Error;

use crate::dataset::Side;
use crate::linalg::{BlockError, NotPositiveDefinite};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, sizes or configuration values that cannot work together.
    #[error("{0}")]
    Structure(String),

    #[error(transparent)]
    Block(#[from] BlockError),

    #[error(transparent)]
    Singular(#[from] NotPositiveDefinite),

    /// A row system in a solver pass could not be factorized.
    #[error("{side} row {row}: {source}")]
    RowSolve {
        side: Side,
        row: usize,
        #[source]
        source: NotPositiveDefinite,
    },

    /// Non-positive denominator in a scalar coordinate update.
    #[error("{side} row {row}: non-positive curvature {value} in dimension {dim}")]
    Curvature {
        side: Side,
        row: usize,
        dim: usize,
        value: f64,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }
}
