use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse config: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("negative energy {0} eV has no wave vector")]
    NegativeEnergy(f64),

    #[error("time step {dt:e} s violates dt*gamma_max = {product:.4} > {limit}")]
    TimeStep { dt: f64, product: f64, limit: f64 },

    #[error("boundary interval has non-positive density {0:e}")]
    ZeroBoundaryDensity(f64),

    #[error("state diverged at step {step} (t = {time_ps} ps): {detail}")]
    Diverged {
        step: usize,
        time_ps: f64,
        detail: String,
    },

    #[error("bad collision-matrix file: {0}")]
    MatrixFormat(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
