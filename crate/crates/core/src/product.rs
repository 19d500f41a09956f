use thiserror::Error;

use crate::camera::PinholeCamera;
use crate::geometry::{Aabb, Pose};
use crate::image::{DepthImage, RgbImage};

/// Output of every backend: color, camera-frame depth and accumulated alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderProduct {
    pub rgb: RgbImage,
    /// Camera-frame z in meters; background pixels carry `far`.
    pub depth: DepthImage,
    pub opacity: DepthImage,
    /// Seconds.
    pub render_time: f64,
}

impl RenderProduct {
    pub fn background(width: usize, height: usize, settings: &RenderSettings) -> Self {
        let bg = settings.background.map(|c| c as f32);
        Self {
            rgb: RgbImage::filled(width, height, bg),
            depth: DepthImage::filled(width, height, settings.far as f32),
            opacity: DepthImage::filled(width, height, 0.0),
            render_time: 0.0,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.rgb.dims()
    }
}

/// Clip planes and background shared by the backends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            near: 0.05,
            far: 10.0,
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("camera must be rectified before rendering")]
    NotRectified,
    #[error("backend not ready: {0}")]
    NotReady(String),
    #[error("{0}")]
    Backend(String),
}

/// Anything that can produce a [`RenderProduct`] for a camera view.
pub trait SceneRenderer: Send + Sync {
    fn render(
        &self,
        camera: &PinholeCamera,
        pose: &Pose,
        crop: Option<&Aabb>,
    ) -> Result<RenderProduct, RenderError>;
}

/// Per-step training summary shared by the trainable backends.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainStats {
    pub photometric_loss: f64,
    pub depth_loss: f64,
    /// Seconds.
    pub step_time: f64,
}
