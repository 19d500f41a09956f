use rfnode_core::RenderError;
use rfnode_ingest::IngestError;
use rfnode_splat::SplatError;
use rfnode_tsdf::TsdfError;
use rfnode_voxel::VoxelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    Dimensions { a: (usize, usize), b: (usize, usize) },
    #[error("{width}x{height} image is smaller than the {window}x{window} window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("no holdout views")]
    NoHoldout,
    #[error("no training keyframes admitted")]
    NoKeyframes,
    #[error("{0}")]
    Config(String),
    #[error("{method} needs depth images")]
    NeedsDepth { method: &'static str },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Splat(#[from] SplatError),
    #[error(transparent)]
    Tsdf(#[from] TsdfError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
