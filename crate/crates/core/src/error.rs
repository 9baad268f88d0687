use thiserror::Error;

use crate::engine::SolveTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("linear system is singular even after diagonal regularization")]
    Singular,

    #[error("objective became non-finite at iteration {iteration}")]
    Divergence {
        iteration: usize,
        trace: Box<SolveTrace>,
    },

    #[error("label encoding: {0}")]
    Encoding(String),

    #[error("class {class} has {count} samples, at least 2 are required")]
    DegenerateClass { class: usize, count: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
