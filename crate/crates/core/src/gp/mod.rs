//! Exact Gaussian-process regression with a squared-exponential kernel:
//! fitting, posterior prediction, marginal-likelihood hyperparameter tuning,
//! and grid lookup-table export.

mod chol;
mod kernel;
mod model;
mod table;

pub use chol::PackedLower;
pub use kernel::SeKernel;
pub use model::{
    tune_hyperparameters, GpModel, HyperBounds, MeanFn, TuneOptions, TuneResult, JITTER_MAX,
    JITTER_MIN, NOISE_FLOOR,
};
pub use table::{GridAxis, LookupTable, TablePack};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("Gram matrix factorization failed even with jitter {jitter:.1e}")]
    IllConditioned { jitter: f64 },
    #[error("grid axis must have at least two strictly increasing nodes")]
    EmptyGridAxis,
    #[error("grid product has {nodes} nodes, above the 10^6 cap")]
    TooManyNodes { nodes: usize },
    #[error("malformed lookup-table file: {0}")]
    BadTableFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
