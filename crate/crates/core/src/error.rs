use thiserror::Error;

/// Errors raised across the search engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid architecture: {0}")]
    Validation(String),
    #[error("search space has {size} architectures, above the limit of {limit}")]
    SpaceTooLarge { size: u128, limit: u128 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("gradient error: {0}")]
    Gradient(String),
    #[error("weight bank does not match configuration: {0}")]
    Bank(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
