//! Pinhole intrinsics, pixel back-projection and progressive rescaling.
//!
//! Pixel `(px, py)` addresses the image plane point `(px + 0.5, py + 0.5)`;
//! the same convention is used by the ray marcher, the splat rasterizer and
//! the mesh rasterizer so their outputs line up pixel for pixel.

use nalgebra::Vector3;

use crate::error::CoreError;
use crate::geometry::{Pose, Ray};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    distortion: [f64; 4],
    rectified: bool,
}

impl PinholeCamera {
    /// Rectified camera with zero distortion.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, CoreError> {
        Self::with_distortion(fx, fy, cx, cy, width, height, [0.0; 4], true)
    }

    /// `distortion` holds radial-tangential `[k1, k2, p1, p2]`; it is zeroed
    /// when `rectified` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn with_distortion(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        distortion: [f64; 4],
        rectified: bool,
    ) -> Result<Self, CoreError> {
        let finite = [fx, fy, cx, cy].iter().chain(distortion.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(CoreError::InvalidCamera("non-finite intrinsics".into()));
        }
        if width == 0 || height == 0 {
            return Err(CoreError::InvalidCamera("zero image dimension".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CoreError::InvalidCamera(format!("focal lengths must be positive (fx={fx}, fy={fy})")));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(CoreError::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            distortion: if rectified { [0.0; 4] } else { distortion },
            rectified,
        })
    }

    /// Camera with principal point at the image center and the given
    /// horizontal field of view.
    pub fn from_fov(width: u32, height: u32, hfov_radians: f64) -> Result<Self, CoreError> {
        let fx = width as f64 * 0.5 / (hfov_radians * 0.5).tan();
        Self::new(fx, fx, width as f64 * 0.5, height as f64 * 0.5, width, height)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn distortion(&self) -> [f64; 4] {
        self.distortion
    }
    pub fn rectified(&self) -> bool {
        self.rectified
    }
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Same intrinsics, marked rectified (distortion cleared).
    pub fn as_rectified(&self) -> Self {
        Self {
            distortion: [0.0; 4],
            rectified: true,
            ..*self
        }
    }

    /// Camera-frame direction (not normalized, z = 1) through a pixel.
    pub fn pixel_direction(&self, px: f64, py: f64) -> Vector3<f64> {
        Vector3::new((px + 0.5 - self.cx) / self.fx, (py + 0.5 - self.cy) / self.fy, 1.0)
    }

    /// Continuous image-plane coordinates of a camera-frame point, or `None`
    /// for points at or behind the camera plane.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Option<(f64, f64)> {
        if p_cam.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Applies the radial-tangential model to normalized coordinates.
    pub fn distort_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let [k1, k2, p1, p2] = self.distortion;
        let r2 = x * x + y * y;
        let radial = 1.0 + k1 * r2 + k2 * r2 * r2;
        (
            x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
            y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y,
        )
    }

    /// Intrinsics scaled by independent integer-realized ratios.
    fn rescaled(&self, width: u32, height: u32) -> Self {
        let rx = width as f64 / self.width as f64;
        let ry = height as f64 / self.height as f64;
        Self {
            fx: self.fx * rx,
            fy: self.fy * ry,
            cx: self.cx * rx,
            cy: self.cy * ry,
            width,
            height,
            ..*self
        }
    }

    /// Rescales to exactly `width`×`height` (used to bring every camera to
    /// the keyframe buffer's canonical resolution).
    pub fn resized(&self, width: u32, height: u32) -> Result<Self, CoreError> {
        if width == 0 || height == 0 {
            return Err(CoreError::InvalidCamera("zero image dimension".into()));
        }
        Ok(self.rescaled(width, height))
    }
}

/// World-space ray through pixel `(px, py)`.
///
/// Accepts continuous coordinates in `[-0.5, width - 0.5]` so that rescaled
/// pixel centers `(px + 0.5) * s - 0.5` remain addressable.
pub fn ray_for_pixel(camera: &PinholeCamera, pose: &Pose, px: f64, py: f64) -> Result<Ray, CoreError> {
    let w = camera.width as f64;
    let h = camera.height as f64;
    let inside = px >= -0.5 && px <= w - 0.5 && py >= -0.5 && py <= h - 0.5;
    if !inside || !px.is_finite() || !py.is_finite() {
        return Err(CoreError::PixelOutOfBounds {
            px,
            py,
            width: camera.width,
            height: camera.height,
        });
    }
    let d_cam = camera.pixel_direction(px, py).normalize();
    Ok(Ray {
        origin: *pose.translation(),
        direction: pose.rotate(&d_cam),
    })
}

/// Camera for a progressive stage rendered at `fraction` of full resolution.
///
/// Dimensions are floored (never below 1) and the intrinsics are rescaled by
/// the realized integer ratio rather than the requested fraction.
pub fn scale_camera(camera: &PinholeCamera, fraction: f64) -> Result<PinholeCamera, CoreError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CoreError::InvalidFraction(fraction));
    }
    if fraction == 1.0 {
        return Ok(*camera);
    }
    // 1e-9 absorbs products such as 0.29 * 100 = 28.999999999999996.
    let scaled = |n: u32| ((n as f64 * fraction + 1e-9).floor() as u32).max(1);
    Ok(camera.rescaled(scaled(camera.width), scaled(camera.height)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam100() -> PinholeCamera {
        PinholeCamera::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn principal_point_maps_to_axis() {
        let r = ray_for_pixel(&cam100(), &Pose::identity(), 49.5, 49.5).unwrap();
        assert!((r.direction - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn off_axis_direction_matches_hand_value() {
        // (99.5 + 0.5 - 50) / 100 = 0.5 -> (0.5, 0, 1) / sqrt(1.25)
        let r = ray_for_pixel(&cam100(), &Pose::identity(), 99.5, 49.5).unwrap();
        let expect = Vector3::new(0.5, 0.0, 1.0) / 1.25_f64.sqrt();
        assert!((r.direction - expect).norm() < 1e-12);
        assert!((r.direction.x - 0.4472).abs() < 1e-4);
        assert!((r.direction.z - 0.8944).abs() < 1e-4);
    }

    #[test]
    fn out_of_bounds_pixel_is_error() {
        assert!(ray_for_pixel(&cam100(), &Pose::identity(), 100.0, 3.0).is_err());
        assert!(ray_for_pixel(&cam100(), &Pose::identity(), -1.0, 3.0).is_err());
    }

    #[test]
    fn rectified_zeroes_distortion() {
        let c = PinholeCamera::with_distortion(10.0, 10.0, 5.0, 5.0, 10, 10, [0.1, 0.2, 0.3, 0.4], true).unwrap();
        assert_eq!(c.distortion(), [0.0; 4]);
        let c = PinholeCamera::with_distortion(10.0, 10.0, 5.0, 5.0, 10, 10, [0.1, 0.2, 0.3, 0.4], false).unwrap();
        assert_eq!(c.distortion(), [0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(PinholeCamera::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 1.0, 1.0, 0, 4).is_err());
    }

    #[test]
    fn scale_identity_and_halving() {
        let c = cam100();
        assert_eq!(scale_camera(&c, 1.0).unwrap(), c);
        let big = PinholeCamera::new(800.0, 700.0, 500.0, 400.0, 1000, 800).unwrap();
        let half = scale_camera(&big, 0.5).unwrap();
        assert_eq!((half.width(), half.height()), (500, 400));
        assert_eq!(half.fx(), 400.0);
        assert_eq!(half.cy(), 200.0);
    }

    #[test]
    fn scale_uses_realized_ratio() {
        let c = PinholeCamera::new(900.0, 900.0, 512.0, 384.0, 1024, 768).unwrap();
        let s = scale_camera(&c, 0.1).unwrap();
        assert_eq!((s.width(), s.height()), (102, 76));
        assert!((s.fx() - 900.0 * 102.0 / 1024.0).abs() < 1e-12);
        assert!((s.fy() - 900.0 * 76.0 / 768.0).abs() < 1e-12);
        assert!(scale_camera(&c, 0.0).is_err());
        assert!(scale_camera(&c, 1.5).is_err());
    }

    #[test]
    fn tiny_fraction_keeps_one_pixel() {
        let c = cam100();
        let s = scale_camera(&c, 1e-6).unwrap();
        assert_eq!((s.width(), s.height()), (1, 1));
    }

    #[test]
    fn scale_round_trip_with_exact_ratios() {
        let c = PinholeCamera::new(300.0, 300.0, 200.0, 100.0, 400, 200).unwrap();
        let quarter = scale_camera(&c, 0.25).unwrap();
        let back = quarter.resized(400, 200).unwrap();
        assert_eq!((back.width(), back.height()), (400, 200));
        assert!((back.fx() - c.fx()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn directions_are_unit_and_scale_invariant(
            fx in 50.0f64..500.0, fy in 50.0f64..500.0,
            w in 16u32..400, h in 16u32..400,
            ux in 0.0f64..1.0, uy in 0.0f64..1.0,
            frac in 0.05f64..1.0,
        ) {
            let cam = PinholeCamera::new(fx, fy, w as f64 * 0.45, h as f64 * 0.55, w, h).unwrap();
            let pose = Pose::new([0.3, -0.2, 0.9, 0.1], [1.0, 2.0, 3.0]).unwrap();
            let px = (ux * w as f64).floor().min(w as f64 - 1.0);
            let py = (uy * h as f64).floor().min(h as f64 - 1.0);
            let r = ray_for_pixel(&cam, &pose, px, py).unwrap();
            prop_assert!((r.direction.norm() - 1.0).abs() < 1e-12);

            let s = scale_camera(&cam, frac).unwrap();
            let sx = s.width() as f64 / w as f64;
            let sy = s.height() as f64 / h as f64;
            let rs = ray_for_pixel(&s, &pose, (px + 0.5) * sx - 0.5, (py + 0.5) * sy - 0.5).unwrap();
            prop_assert!((rs.direction - r.direction).norm() < 1e-9);
        }
    }
}
