//! Exact Gaussian-process regression with an ARD squared-exponential kernel.
//!
//! Used for both transition-function learning and Q-value learning. Noise
//! enters only on the Gram diagonal and in predictive variances.

mod cache;
mod cholesky;
pub mod hyper;
mod kernel;
mod model;
mod snapshot;

use thiserror::Error;

pub use cache::QueryCache;
pub use hyper::{fit_hyperparameters, fit_hyperparameters_masked, nlml, nlml_gradient, HyperFit};
pub use kernel::{kernel_eval, KernelParams};
pub use model::{GpModel, Prediction, PriorMean, TrainingSet, DEFAULT_CAPACITY};
pub use snapshot::{GpSnapshot, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set has {inputs} inputs but {outputs} outputs")]
    LengthMismatch { inputs: usize, outputs: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("Gram matrix is not positive definite even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
    #[error("need at least {needed} training points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("snapshot: {0}")]
    Snapshot(String),
}
