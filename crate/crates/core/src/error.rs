use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// A loss, residual or objective evaluated to NaN or infinity.
    #[error("degenerate evaluation: {0}")]
    DegenerateEvaluation(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("training aborted at step {step}: {reason}")]
    TrainingAborted { step: usize, reason: String },

    #[error(
        "gradient self-check failed at parameter {index}: analytic {analytic:e}, finite difference {numeric:e}"
    )]
    GradientCheck {
        index: usize,
        analytic: f64,
        numeric: f64,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
