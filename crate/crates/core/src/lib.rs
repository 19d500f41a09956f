//! Shared geometry and image containers for the reconstruction server.
//!
//! Every backend (ray-marched voxels, Gaussian splats, TSDF meshes) consumes
//! the same [`PinholeCamera`] / [`Pose`] pair and emits a [`RenderProduct`],
//! which the [`compositor`] merges with overlay geometry.
//!
//! Depth images everywhere in the workspace carry camera-frame z in meters
//! (OpenCV convention: +x right, +y down, +z forward).

pub mod camera;
pub mod compositor;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod image;
pub mod optim;
pub mod product;
pub mod sh;

pub use camera::{ray_for_pixel, scale_camera, PinholeCamera};
pub use error::CoreError;
pub use frame::FrameSample;
pub use geometry::{ray_aabb_clip, Aabb, Pose, Ray};
pub use image::{DepthImage, ImageBuf, RgbImage};
pub use product::{RenderError, RenderProduct, RenderSettings, SceneRenderer, TrainStats};

pub use nalgebra::{Matrix3, UnitQuaternion, Vector3};
