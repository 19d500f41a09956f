use rfnode_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("camera `{0}` is not registered")]
    UnregisteredCamera(String),
    #[error("camera `{0}` is already registered")]
    DuplicateCamera(String),
    #[error("frame from `{camera}` seq {seq} has no depth but the buffer stores depth")]
    MissingDepth { camera: String, seq: u64 },
    #[error("keyframe buffer is empty")]
    EmptyBuffer,
    #[error("no cameras registered")]
    NoCameras,
    #[error("invalid replay script line {line}: {reason}")]
    Script { line: usize, reason: String },
    #[error("invalid session manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
