use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector is not on the unit sphere: |norm - 1| = {deviation:e}")]
    NotUnit { deviation: f64 },

    #[error("matrix is not skew-Hermitian: |A + A^H|_F = {residual:e}")]
    NotSkewHermitian { residual: f64 },

    #[error("real embedding must have even length, found {0}")]
    OddLength(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("input too large: {what} = {size} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("heterogeneous ensemble where a common frequency is required")]
    Heterogeneous,

    #[error("complex data where real data is required: max |Im| = {max_imag:e}")]
    NotReal { max_imag: f64 },

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
