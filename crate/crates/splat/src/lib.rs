//! 3D Gaussian splatting backend.
//!
//! Gaussians are initialized by back-projecting RGBD keyframes, projected
//! with the EWA approximation, depth sorted, binned to screen tiles and
//! alpha blended front to back. The backward pass mirrors the blend in
//! reverse and chains through projection, activations and the quaternion
//! rotation. There is no densification; low-opacity Gaussians are pruned.

mod ckpt;
mod error;
mod init;
mod project;
mod raster;
mod set;
mod train;

pub use ckpt::{decode_checkpoint, encode_checkpoint, export_ply, CKPT_MAGIC, CKPT_VERSION};
pub use error::SplatError;
pub use init::{extend_from_entry, init_from_rgbd};
pub use project::{project_gaussian, Projection};
pub use raster::{rasterize, RasterStats, SplatRenderer};
pub use set::{prune, SplatSet};
pub use train::{loss_and_grad, SplatConfig, SplatGrad, SplatTrainer};
