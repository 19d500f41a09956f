use rfnode_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TsdfError {
    #[error("frame {0} has no depth image")]
    MissingDepth(u64),
    #[error("camera must be rectified")]
    NotRectified,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}
