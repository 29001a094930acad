use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid a-priori measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid state space: {0}")]
    InvalidSpace(String),

    #[error("wrong arity: expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("grid of {size} tuples exceeds the configured cap of {cap}")]
    GridCap { size: u128, cap: usize },

    #[error("rank mismatch: expected {expected}, got {got}")]
    RankMismatch { expected: usize, got: usize },

    #[error("{method} did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged {
        method: String,
        iterations: usize,
        residual: f64,
    },

    #[error("non-positive value where a positive one is required: {0}")]
    NonPositive(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("measure and potential do not match: {0}")]
    Provenance(String),

    #[error("numerical overflow at beta = {beta}: {detail}")]
    Overflow { beta: f64, detail: String },
}

impl Error {
    /// True for errors caused by a size cap rather than by the data.
    pub fn is_resource_cap(&self) -> bool {
        matches!(self, Error::GridCap { .. })
    }

    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::NotConverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
