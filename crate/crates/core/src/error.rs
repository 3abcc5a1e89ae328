use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("multi-index has negative degree {twice_degree}/2")]
    NegativeDegree { twice_degree: i64 },

    #[error("exponent {0} exceeds the supported double-factorial range (<= 33)")]
    ExponentTooLarge(u32),

    #[error("quadrature oracle supports dimension <= 4, got {0}")]
    OracleDimension(usize),

    #[error("oracle radius {radius} is below the 8*sqrt(t*n) rule ({required})")]
    OracleRadius { radius: f64, required: f64 },

    #[error("oracle failed to converge after {0} refinements")]
    OracleNoConvergence(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("structural precondition violated: {0}")]
    Structure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step {s} is outside the injectivity guard (< {limit})")]
    OutsideInjectivity { s: f64, limit: f64 },

    #[error("grid spacing {spacing:.4e} too coarse for t = {t:.4e} (need <= {required:.4e})")]
    GridTooCoarse { spacing: f64, t: f64, required: f64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("effective sample size {ess:.1} is below 5% of {nominal}")]
    LowEffectiveSampleSize { ess: f64, nominal: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
