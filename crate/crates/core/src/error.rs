use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("batch length mismatch: {predicted} predicted vs {target} target boxes")]
    LengthMismatch { predicted: usize, target: usize },

    #[error("index {index} out of range for batch of {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dataset generation infeasible: no valid perturbation after {attempts} attempts for pair {pair}")]
    Infeasible { pair: usize, attempts: usize },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
