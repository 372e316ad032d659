use thiserror::Error;

use crate::spectral::Grid;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: Grid, right: Grid },

    #[error("block index {index} outside [-1, {max}]")]
    BlockOutOfRange { index: i32, max: i32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("noise weights not summable: {0}")]
    NotSummable(String),

    #[error("blow-up at t = {time}: {quantity} = {value:e}")]
    BlowUp {
        time: f64,
        quantity: &'static str,
        value: f64,
    },

    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),

    #[error("target is not divergence-free (max |k.u_k| / |u| = {0:e})")]
    NotSolenoidal(f64),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
