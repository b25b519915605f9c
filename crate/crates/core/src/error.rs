use thiserror::Error;

/// Errors raised by configuration validation, geometry construction and the
/// numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("schedule infeasible: {0}")]
    InfeasibleSchedule(String),

    #[error("invalid matrix input: {0}")]
    InvalidMatrix(String),

    #[error("coincident nodes: distance is zero between indices {0} and {1}")]
    CoincidentNodes(usize, usize),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate}, residual {residual})")]
    NoConvergence {
        iterations: usize,
        last_estimate: f64,
        residual: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}
