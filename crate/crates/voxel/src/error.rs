use rfnode_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VoxelError {
    #[error("grid resolution must be at least 2 per axis, got {0:?}")]
    InvalidResolution([usize; 3]),
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("non-finite loss (photometric {photometric}, depth {depth}); step rejected")]
    NonFinite { photometric: f64, depth: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}
