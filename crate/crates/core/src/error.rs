use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum EquiwaveError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shooting did not converge after {iterations} iterations (bracket [{lo}, {hi}])")]
    ShootingFailed { iterations: usize, lo: f64, hi: f64 },

    #[error("operator is not positive definite (smallest eigenvalue {smallest:e})")]
    NotPositiveDefinite { smallest: f64 },

    #[error("tridiagonal eigensolver did not converge for eigenvalue {index}")]
    EigenNoConvergence { index: usize },

    #[error("no admissible R0 below Rmax = {rmax}")]
    NoAdmissibleRadius { rmax: f64 },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("effective sample size {ess:.1} is below the floor {floor}")]
    EssTooLow { ess: f64, floor: f64 },

    #[error("optimizer stagnated after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Stagnation { iterations: usize, gradient_norm: f64 },

    #[error("CFL violation: dt = {dt}, h = {h}")]
    CflViolation { dt: f64, h: f64 },

    #[error("non-finite value in the solution at t = {time}")]
    NonFinite { time: f64 },

    #[error("window violated: {0}")]
    WindowViolation(String),

    #[error("tail window too short: {0}")]
    TailTooShort(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EquiwaveError>;
