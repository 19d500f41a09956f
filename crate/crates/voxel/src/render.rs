use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use rfnode_core::sh::{sh_color, softplus};
use rfnode_core::{
    ray_aabb_clip, ray_for_pixel, Aabb, DepthImage, PinholeCamera, Pose, Ray, RenderError, RenderProduct, RgbImage,
    SceneRenderer, Vector3,
};

use crate::grid::{Stencil, VoxelGrid};
use crate::train::VoxelConfig;

/// Composited result of one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayOutput {
    pub rgb: [f64; 3],
    /// Ray parameter `t` (meters along the unit direction).
    pub depth: f64,
    /// `Σ wᵢ`.
    pub opacity: f64,
    /// Transmittance left after the last sample.
    pub transmittance: f64,
}

impl RayOutput {
    pub(crate) fn empty(background: [f64; 3], far: f64) -> Self {
        Self { rgb: background, depth: far, opacity: 0.0, transmittance: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MarchSample {
    pub stencil: Stencil,
    pub t: f64,
    pub raw: f64,
    pub alpha: f64,
    /// Transmittance before this sample.
    pub trans: f64,
    pub color: [f64; 3],
}

/// `[near, far] ∩ bounds ∩ crop` along the ray.
pub(crate) fn integration_interval(grid: &VoxelGrid, ray: &Ray, crop: Option<&Aabb>, near: f64, far: f64) -> Option<(f64, f64)> {
    let (b0, b1) = ray_aabb_clip(ray, grid.bounds())?;
    let mut t0 = near.max(b0);
    let mut t1 = far.min(b1);
    if let Some(c) = crop {
        let (c0, c1) = ray_aabb_clip(ray, c)?;
        t0 = t0.max(c0);
        t1 = t1.min(c1);
    }
    (t1 > t0).then_some((t0, t1))
}

/// Midpoint quadrature over `[t0, t1]` with `n` samples. When `record` is
/// given, per-sample state for the backward pass is appended to it.
pub(crate) fn march(
    grid: &VoxelGrid,
    ray: &Ray,
    (t0, t1): (f64, f64),
    n: usize,
    background: [f64; 3],
    far: f64,
    mut record: Option<&mut Vec<MarchSample>>,
) -> RayOutput {
    let delta = (t1 - t0) / n as f64;
    let dir = [ray.direction.x, ray.direction.y, ray.direction.z];
    let mut trans = 1.0;
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    let mut opacity = 0.0;
    for i in 0..n {
        let t = t0 + (i as f64 + 0.5) * delta;
        let stencil = grid.stencil(&ray.at(t));
        let (raw, sh) = grid.interpolate(&stencil);
        let alpha = 1.0 - (-softplus(raw) * delta).exp();
        let color = sh_color(&sh, dir);
        let w = trans * alpha;
        for c in 0..3 {
            rgb[c] += w * color[c];
        }
        depth += w * t;
        opacity += w;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(MarchSample { stencil, t, raw, alpha, trans, color });
        }
        trans *= 1.0 - alpha;
    }
    for c in 0..3 {
        rgb[c] += trans * background[c];
    }
    depth += trans * far;
    RayOutput { rgb, depth, opacity, transmittance: trans }
}

/// Composites one ray; `config.near`/`config.far` bound the ray parameter.
pub fn render_ray(grid: &VoxelGrid, ray: &Ray, crop: Option<&Aabb>, config: &VoxelConfig) -> RayOutput {
    match integration_interval(grid, ray, crop, config.near, config.far) {
        Some(iv) => march(grid, ray, iv, config.samples_per_ray, config.background, config.far, None),
        None => RayOutput::empty(config.background, config.far),
    }
}

/// Clip planes apply to camera-frame z, so each pixel's `t` range is
/// `[near, far] / cos θ` and the reported depth is `t · cos θ`.
pub(crate) fn render_pixel(
    grid: &VoxelGrid,
    ray: &Ray,
    axis: &Vector3<f64>,
    crop: Option<&Aabb>,
    config: &VoxelConfig,
) -> (RayOutput, f64) {
    let cos = ray.direction.dot(axis);
    let out = match integration_interval(grid, ray, crop, config.near / cos, config.far / cos) {
        Some(iv) => march(grid, ray, iv, config.samples_per_ray, config.background, config.far / cos, None),
        None => RayOutput::empty(config.background, config.far / cos),
    };
    (out, cos)
}

pub fn render_image(
    grid: &VoxelGrid,
    camera: &PinholeCamera,
    pose: &Pose,
    crop: Option<&Aabb>,
    config: &VoxelConfig,
) -> RenderProduct {
    let start = Instant::now();
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let axis = pose.rotate(&Vector3::z());
    let rows: Vec<Vec<([f32; 3], f32, f32)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let ray = ray_for_pixel(camera, pose, x as f64, y as f64).expect("pixel in bounds");
                    let (out, cos) = render_pixel(grid, &ray, &axis, crop, config);
                    let z = (out.depth * cos).clamp(config.near, config.far);
                    (out.rgb.map(|c| c.clamp(0.0, 1.0) as f32), z as f32, out.opacity.clamp(0.0, 1.0) as f32)
                })
                .collect()
        })
        .collect();
    let px: Vec<_> = rows.into_iter().flatten().collect();
    RenderProduct {
        rgb: RgbImage::from_vec(w, h, px.iter().map(|p| p.0).collect()).expect("sized"),
        depth: DepthImage::from_vec(w, h, px.iter().map(|p| p.1).collect()).expect("sized"),
        opacity: DepthImage::from_vec(w, h, px.iter().map(|p| p.2).collect()).expect("sized"),
        render_time: start.elapsed().as_secs_f64(),
    }
}

/// Read-only snapshot usable from the render service.
#[derive(Debug, Clone)]
pub struct VoxelRenderer {
    pub grid: Arc<VoxelGrid>,
    pub config: VoxelConfig,
}

impl SceneRenderer for VoxelRenderer {
    fn render(&self, camera: &PinholeCamera, pose: &Pose, crop: Option<&Aabb>) -> Result<RenderProduct, RenderError> {
        if !camera.rectified() {
            return Err(RenderError::NotRectified);
        }
        Ok(render_image(&self.grid, camera, pose, crop, &self.config))
    }
}
