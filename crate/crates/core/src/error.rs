use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("level scheme is not monotonic: {0}")]
    NonMonotonicScheme(String),

    #[error("quadrature did not converge (reached {evals} evaluations, residual {residual:.3e})")]
    QuadratureFailure { evals: usize, residual: f64 },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("calibration infeasible: {0}")]
    Infeasible(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
