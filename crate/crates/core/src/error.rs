use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum GsarError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("index {index} at line {line} is outside [1, {n}]")]
    IndexOutOfBounds { index: i64, n: usize, line: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported family/link combination: {family}/{link}")]
    UnsupportedLink { family: String, link: String },

    #[error("value {value} outside the mean domain of the {family} family")]
    MeanDomain { family: String, value: f64 },

    #[error("non-finite quasi-likelihood contribution at observation {index}")]
    NonFinite { index: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("design matrix is rank deficient (rank {rank} < {p})")]
    RankDeficient { rank: usize, p: usize },

    #[error("IRLS failed to converge after {iterations} iterations (last max |dbeta| = {last_change:e})")]
    Divergence {
        iterations: usize,
        last_change: f64,
        trace: Vec<f64>,
    },

    #[error("rho estimate {rho} lies on the search boundary; inspect the profile with a fixed rho")]
    BoundaryRho { rho: f64 },

    #[error("non-positive curvature of the rho profile ({curvature:e})")]
    NonPositiveCurvature { curvature: f64 },

    #[error("matrix of size {n} exceeds the dense limit {limit}; use summarize_effects instead")]
    TooLarge { n: usize, limit: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GsarError>;
