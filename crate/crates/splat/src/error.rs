use rfnode_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplatError {
    #[error("no valid depth pixels to initialize from")]
    NoDepth,
    #[error("non-finite loss {0}; step rejected")]
    NonFinite(f64),
    #[error("target image is {actual:?}, camera is {expected:?}")]
    TargetSize { expected: (usize, usize), actual: (usize, usize) },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}
