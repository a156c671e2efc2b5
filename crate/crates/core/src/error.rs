use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    /// The K×K Gram matrix G^T·G^{T*} is singular (G lacks full column rank).
    #[error("channel matrix is rank deficient (Gram pivot {pivot:e} at column {column})")]
    RankDeficient { column: usize, pivot: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("cone solver failed: {0}")]
    NumericalTrouble(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(alloc::string::String),
    #[error("missing parameter `{0}`")]
    MissingParameter(alloc::string::String),
    #[error("unexpected parameter `{0}`")]
    UnexpectedParameter(alloc::string::String),
}
