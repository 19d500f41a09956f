use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rfnode_core::sh::sh_color;
use rfnode_core::{Aabb, PinholeCamera, Pose};

use crate::set::SplatSet;
use crate::train::SplatConfig;

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Continuous pixel coordinates (pixel centers at `i + 0.5`).
    pub mean2d: [f64; 2],
    /// Pixels², low-pass included.
    pub cov2d: Matrix2<f64>,
    /// Camera-frame z, meters.
    pub depth: f64,
}

pub(crate) struct CameraFrame {
    pub w: Matrix3<f64>,
    pub t: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraFrame {
    pub fn new(camera: &PinholeCamera, pose: &Pose) -> Self {
        Self {
            w: pose.rotation_matrix().transpose(),
            t: *pose.translation(),
            fx: camera.fx(),
            fy: camera.fy(),
            cx: camera.cx(),
            cy: camera.cy(),
        }
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.w * (p - self.t)
    }

    pub fn jacobian(&self, m: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / m.z;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * m.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * m.y * iz * iz,
        )
    }
}

/// EWA projection: `cov2d = J W Σ Wᵀ Jᵀ + low_pass·I`. `None` at or in front
/// of the near plane.
pub fn project_gaussian(
    splats: &SplatSet,
    index: usize,
    camera: &PinholeCamera,
    pose: &Pose,
    config: &SplatConfig,
) -> Option<Projection> {
    project_with(splats, index, &CameraFrame::new(camera, pose), config)
}

fn project_with(splats: &SplatSet, index: usize, frame: &CameraFrame, config: &SplatConfig) -> Option<Projection> {
    let m = frame.to_camera(&splats.mean(index));
    if !(m.z > config.near) {
        return None;
    }
    let jw = frame.jacobian(&m) * frame.w;
    let mut cov2d = jw * splats.covariance(index) * jw.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += config.low_pass;
    cov2d[(1, 1)] += config.low_pass;
    Some(Projection {
        mean2d: [frame.fx * m.x / m.z + frame.cx, frame.fy * m.y / m.z + frame.cy],
        cov2d,
        depth: m.z,
    })
}

/// Everything the blender needs for one visible Gaussian.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prepared {
    pub index: usize,
    pub mean2d: [f64; 2],
    /// `(a, b, c)` of the inverse covariance `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Inclusive pixel range `[x0, x1] × [y0, y1]` that can reach `alpha_min`.
    pub pixels: [i64; 4],
}

pub(crate) enum Culled {
    Hidden,
    Singular,
}

pub(crate) fn prepare(
    splats: &SplatSet,
    index: usize,
    frame: &CameraFrame,
    camera: &PinholeCamera,
    crop: Option<&Aabb>,
    config: &SplatConfig,
) -> Result<Prepared, Culled> {
    let mean = splats.mean(index);
    if crop.is_some_and(|c| !c.contains(&mean)) {
        return Err(Culled::Hidden);
    }
    let opacity = splats.opacity(index);
    if opacity <= config.alpha_min {
        return Err(Culled::Hidden);
    }
    let p = project_with(splats, index, frame, config).ok_or(Culled::Hidden)?;
    if p.depth > config.far {
        return Err(Culled::Hidden);
    }
    let (xx, xy, yy) = (p.cov2d[(0, 0)], p.cov2d[(0, 1)], p.cov2d[(1, 1)]);
    let det = xx * yy - xy * xy;
    if !(det >= 1e-12) || !det.is_finite() {
        return Err(Culled::Singular);
    }
    // alpha = o·exp(-q/2) >= alpha_min  <=>  q <= 2 ln(o / alpha_min)
    let k = 2.0 * (opacity / config.alpha_min).ln();
    let rx = (k * xx).sqrt() + 1e-6;
    let ry = (k * yy).sqrt() + 1e-6;
    let [u, v] = p.mean2d;
    if !(u.is_finite() && v.is_finite() && rx.is_finite() && ry.is_finite()) {
        return Err(Culled::Hidden);
    }
    let (w, h) = (camera.width() as i64, camera.height() as i64);
    let x0 = ((u - rx - 0.5).ceil() as i64).max(0);
    let x1 = ((u + rx - 0.5).floor() as i64).min(w - 1);
    let y0 = ((v - ry - 0.5).ceil() as i64).max(0);
    let y1 = ((v + ry - 0.5).floor() as i64).min(h - 1);
    if x0 > x1 || y0 > y1 {
        return Err(Culled::Hidden);
    }
    let dir = (mean - frame.t).normalize();
    let color = sh_color(splats.color(index), [dir.x, dir.y, dir.z]);
    Ok(Prepared {
        index,
        mean2d: p.mean2d,
        conic: [yy / det, -xy / det, xx / det],
        depth: p.depth,
        opacity,
        color,
        pixels: [x0, x1, y0, y1],
    })
}
