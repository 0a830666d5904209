use thiserror::Error;

/// Errors raised across the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("field contains a non-finite value at slot {0}")]
    NonFinite(usize),

    #[error("mask has zero measure")]
    EmptyMask,

    #[error("ball of radius {radius} does not fit in a half period of the torus")]
    BallTooLarge { radius: f64 },

    #[error("invalid radii: {0}")]
    InvalidRadii(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("inverse operator needs a mean-zero input (mean {mean:e})")]
    NotMeanZero { mean: f64 },

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("input is not supported inside the ball (tail {tail:e} relative to max)")]
    SupportViolation { tail: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("only {found} dyadic levels are resolvable, need {needed}")]
    InsufficientLevels { found: usize, needed: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
