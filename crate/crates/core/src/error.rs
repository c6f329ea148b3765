use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has (near-)zero norm and cannot be normalized")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("learning rate {0} outside (0, 1]")]
    InvalidRate(f64),

    #[error("modulation sign {0} outside {{-1, 0, +1}}")]
    InvalidModulation(i32),

    #[error("explicit renormalization of a cancelled update (norm below 1e-12)")]
    DegenerateUpdate,

    #[error("all {capacity} prototypes are allocated")]
    CapacityExhausted { capacity: usize },

    #[error("model has not seen any class yet")]
    EmptyModel,

    #[error("shrunk covariance is singular at tolerance 1e-10")]
    SingularCovariance,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("no completed run found at {0}")]
    MissingRun(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
