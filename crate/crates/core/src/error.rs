use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty population: {0}")]
    EmptyPopulation(String),

    #[error("design too large: {units} units per cycle exceeds the cap of {cap}")]
    TooLarge { units: u128, cap: u64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("variance not estimable: {0}")]
    VarianceNotEstimable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
