use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] qfi_core::QfiError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization: {0}")]
    Serialize(String),
    #[error("malformed run directory: {0}")]
    RunDir(String),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
