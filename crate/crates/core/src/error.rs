use std::path::PathBuf;

use mmn_autograd::TensorError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, MmnError>;

#[derive(Debug, Error)]
pub enum MmnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl MmnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MmnError::Io { path: path.into(), source }
    }
}
