use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid is not valid: {0}")]
    InvalidGrid(String),

    #[error("step collapse at index {index}: h = {step:e}")]
    StepCollapse { index: usize, step: f64 },

    #[error("argument {value} outside the domain [0, 1]")]
    Domain { value: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("system is already row-scaled")]
    AlreadyScaled,

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("GMRES breakdown at iteration {0}")]
    Breakdown(usize),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FdeError {
    fn from(e: std::io::Error) -> Self {
        FdeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FdeError>;
