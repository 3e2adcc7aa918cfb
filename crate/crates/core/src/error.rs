use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty interior: {shape} at N = {side} has no vertex at distance > 1/N from the complement")]
    EmptyInterior { shape: String, side: u64 },

    #[error("invalid domain shape: {0}")]
    InvalidShape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("system too large for a dense solve: {vertices} vertices (limit {limit})")]
    TooLarge { vertices: usize, limit: usize },

    #[error("linear system is singular or not positive definite: {0}")]
    Singular(String),

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("annulus nesting fails at i = {index}: {reason}")]
    Nesting { index: usize, reason: String },

    #[error("tail bound regime violated ({side} tail): {detail}")]
    Regime { side: &'static str, detail: String },

    #[error("normalization check failed: {0}")]
    Normalization(String),

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("degenerate binning: {0}")]
    DegenerateBinning(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("clustering violated: {0}")]
    NotClustered(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
