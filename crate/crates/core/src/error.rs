use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature degeneracy: {0}")]
    QuadratureDegeneracy(String),
    #[error("accuracy check failed for {what}: measured {measured:e}, tolerance {tolerance:e}")]
    Accuracy {
        what: String,
        measured: f64,
        tolerance: f64,
    },
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    Iteration { iterations: usize, residual: f64 },
    #[error("search failed: {0}")]
    SearchFailure(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
