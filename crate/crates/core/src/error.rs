use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("state is not normalized (trace {trace})")]
    NotNormalized { trace: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "acceptance rate {rate:e} below 1e-4 after {proposals} proposals (criterion misconfigured?)"
    )]
    LowAcceptance { proposals: u64, rate: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("backward: {0}")]
    Backward(String),

    #[error("numeric abort: {0}")]
    NumericAbort(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
