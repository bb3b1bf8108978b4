//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate observation for asset {asset:?} at tick {tick}")]
    DuplicateObservation { asset: String, tick: u64 },

    #[error("ticks for asset {asset:?} are not strictly increasing at tick {tick}")]
    NonMonotoneTicks { asset: String, tick: u64 },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("assets {i} and {j} share no observation ticks")]
    EmptyGrid { i: usize, j: usize },

    #[error("asset index {index} out of range for a panel with {p} assets")]
    AssetOutOfRange { index: usize, p: usize },

    #[error("pair ({i}, {j}) cannot be estimated: {reason}")]
    Unestimable { i: usize, j: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive semidefinite (pivot {pivot} = {value:e})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("relative error undefined: reference matrix is identically zero")]
    UndefinedRatio,

    #[error("power iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, used in CLI error documents and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => "parse",
            Error::DuplicateObservation { .. } => "duplicate_observation",
            Error::NonMonotoneTicks { .. } | Error::InvalidPanel(_) => "invalid_panel",
            Error::EmptyGrid { .. } => "empty_grid",
            Error::AssetOutOfRange { .. } => "invalid_argument",
            Error::Unestimable { .. } => "estimation",
            Error::InvalidConfig(_) => "config",
            Error::NotPositiveSemidefinite { .. } => "factorization",
            Error::DimensionMismatch { .. } | Error::UndefinedRatio => "invalid_argument",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Simulation(_) => "simulation",
        }
    }
}
