use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("basis is not orthonormal: max |<u_j|u_k> - delta_jk| = {residual:e}")]
    NonOrthonormalInput { residual: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("measurement strength g = {0} outside [0, 1]")]
    StrengthOutOfRange(f64),

    #[error("Gram matrix invalid: {0}")]
    InvalidGram(String),

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("meter states are not orthogonal: max |W^dag W - I| = {residual:e}")]
    MeterNotOrthogonal { residual: f64 },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("outcome sequence has length {found}, protocol has {expected} contexts")]
    LengthMismatch { expected: usize, found: usize },

    #[error("first outcome {found} does not match the initial modality {expected}")]
    InitialMismatch { expected: usize, found: usize },

    #[error("entropy production undefined on a zero-probability path")]
    UndefinedEntropy,

    #[error("path enumeration over {paths} paths exceeds the limit of {limit}")]
    TooManyPaths { paths: f64, limit: usize },

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
}
