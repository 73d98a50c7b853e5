//! Error types shared across modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite hyperparameter or kernel value")]
    NonFinite,
    #[error("invalid kernel: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite covariance in block {0}")]
    Assembly(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("operation not supported in {mode} mode: {what}")]
    UnsupportedMode { mode: String, what: String },
    #[error("discrete model trained at h = {h_train} cannot predict at h = {h_pred}")]
    UnsupportedStep { h_train: f64, h_pred: f64 },
    #[error("invalid data: {0}")]
    Data(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolloutError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("root finding diverged after {iterations} iterations (residual {residual:.3e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("invalid rollout input: {0}")]
    Input(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("every slack value diverged: {0}")]
    AllDiverged(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid system parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("data generation failed: {0}")]
    Generation(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}
