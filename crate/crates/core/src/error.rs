use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("model schema violation: {0}")]
    Schema(String),

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("factorization check failed: {0}")]
    FactorizationCheck(String),

    #[error("simulation diverged at t = {t}: {detail}")]
    Diverged { t: f64, detail: String },

    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
