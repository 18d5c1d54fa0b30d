use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("query ({x}, {z}) lies outside the terrain bounds")]
    OutOfBounds { x: f64, z: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("requested {requested} items from a pool of {available}")]
    PoolExhausted { requested: usize, available: usize },

    #[error("no valid spawn position found: {0}")]
    NoValidSpawn(String),

    #[error("episode already terminated")]
    TerminalState,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("nearest-neighbour distance undefined for a single-flower layout with nonzero spacing weight")]
    SingletonLayout,

    #[error("{count} obstacles exceed the observation capacity of {capacity}")]
    ObstacleCapacity { count: usize, capacity: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
