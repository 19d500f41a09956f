use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("pixel ({px}, {py}) outside {width}x{height} image")]
    PixelOutOfBounds {
        px: f64,
        py: f64,
        width: u32,
        height: u32,
    },
    #[error("scale fraction {0} not in (0, 1]")]
    InvalidFraction(f64),
    #[error("invalid bounding box: {0}")]
    InvalidAabb(String),
    #[error("image dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid depth range: near {near} must be positive and below far {far}")]
    InvalidDepthRange { near: f64, far: f64 },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}
