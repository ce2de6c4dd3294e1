use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis mismatch: left (d={0}, m={1}) vs right (d={2}, m={3})")]
    BasisMismatch(usize, usize, usize, usize),

    #[error("combinatorial guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("{kind} at line {line}, column {column}: {message}")]
    Syntax {
        kind: &'static str,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("numeric domain error in {context}: {value}")]
    Domain { context: String, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("leaf budget exceeded: tree has {leaves} leaves, budget is {budget}")]
    BudgetExceeded { leaves: f64, budget: u64 },

    #[error("malformed formula file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
