//! Dense voxel radiance field.
//!
//! Each cell stores a raw density (activated by softplus) and 12 degree-1
//! SH color coefficients. Rays are marched with uniform midpoint samples
//! and alpha composited; training backpropagates analytically through the
//! compositing, trilinear interpolation and activations.

mod ckpt;
mod error;
mod grid;
mod render;
mod train;

pub use ckpt::{decode_checkpoint, encode_checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use error::VoxelError;
pub use grid::{sample_field, FieldSample, VoxelGrid};
pub use render::{render_image, render_ray, RayOutput, VoxelRenderer};
pub use train::{loss_and_grad, scene_bounds, LossParts, VoxelConfig, VoxelGrad, VoxelTrainer};
