use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: {msg}")]
    Dimension { op: &'static str, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("data error: {0}")]
    Data(String),
}
