use thiserror::Error;

/// Errors raised across the simulation library.
#[derive(Debug, Error)]
pub enum CitError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("setup error: {0}")]
    Setup(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid config key `{key}`: {reason}")]
    ConfigKey { key: String, reason: String },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("window error: {0}")]
    Window(String),
    #[error("equation-of-motion derivation failed: {0}")]
    Derivation(String),
    #[error("extraction error: {0}")]
    Extraction(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CitError>;

impl CitError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            CitError::Config(_) | CitError::ConfigKey { .. } | CitError::Setup(_) => 2,
            CitError::Derivation(_) => 4,
            _ => 3,
        }
    }
}
