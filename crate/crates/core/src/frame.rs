use crate::camera::PinholeCamera;
use crate::error::CoreError;
use crate::geometry::Pose;
use crate::image::{DepthImage, RgbImage};

/// One posed camera observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub camera_id: String,
    pub seq: u64,
    pub timestamp: f64,
    pub rgb: RgbImage,
    /// Camera-frame z in meters; 0 marks an invalid pixel.
    pub depth: Option<DepthImage>,
    pub pose: Pose,
    pub camera: PinholeCamera,
}

impl FrameSample {
    pub fn new(
        camera_id: impl Into<String>,
        seq: u64,
        timestamp: f64,
        rgb: RgbImage,
        depth: Option<DepthImage>,
        pose: Pose,
        camera: PinholeCamera,
    ) -> Result<Self, CoreError> {
        let frame = Self {
            camera_id: camera_id.into(),
            seq,
            timestamp,
            rgb,
            depth,
            pose,
            camera,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let (w, h) = (self.camera.width() as usize, self.camera.height() as usize);
        self.rgb.ensure_dims(w, h)?;
        if let Some(depth) = &self.depth {
            depth.ensure_dims(w, h)?;
            if depth.pixels().iter().any(|d| !d.is_finite() || *d < 0.0) {
                return Err(CoreError::InvalidFrame(
                    "depth must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_depth_and_bad_dims() {
        let cam = PinholeCamera::new(4.0, 4.0, 2.0, 2.0, 4, 4).unwrap();
        let rgb = RgbImage::filled(4, 4, [0.5; 3]);
        let bad = DepthImage::filled(4, 4, -1.0);
        assert!(FrameSample::new("c", 0, 0.0, rgb.clone(), Some(bad), Pose::identity(), cam).is_err());
        let small = RgbImage::filled(3, 4, [0.5; 3]);
        assert!(FrameSample::new("c", 0, 0.0, small, None, Pose::identity(), cam).is_err());
        assert!(FrameSample::new("c", 0, 0.0, rgb, Some(DepthImage::filled(4, 4, 1.0)), Pose::identity(), cam).is_ok());
    }
}
