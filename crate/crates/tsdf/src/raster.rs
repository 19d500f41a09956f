use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector3;
use rfnode_core::{Aabb, DepthImage, PinholeCamera, Pose, RenderError, RenderProduct, RgbImage, SceneRenderer};

use crate::error::TsdfError;
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshRenderConfig {
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
}

impl Default for MeshRenderConfig {
    fn default() -> Self {
        Self { near: 0.05, far: 10.0, background: [0.0; 3] }
    }
}

type ClipVertex = (Vector3<f64>, Vector3<f64>);

/// Sutherland-Hodgman against `z >= near`.
fn clip_near(tri: [ClipVertex; 3], near: f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let (ina, inb) = (a.0.z >= near, b.0.z >= near);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let t = (near - a.0.z) / (b.0.z - a.0.z);
            out.push((a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t));
        }
    }
    out
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Z-buffered fill with perspective-correct color, no back-face culling.
/// With a crop, triangles whose centroid lies outside it are skipped.
pub fn rasterize_mesh(
    mesh: &TriangleMesh,
    camera: &PinholeCamera,
    pose: &Pose,
    crop: Option<&Aabb>,
    config: &MeshRenderConfig,
) -> Result<RenderProduct, TsdfError> {
    if !camera.rectified() {
        return Err(TsdfError::NotRectified);
    }
    if !(config.near > 0.0 && config.near < config.far && config.far.is_finite()) {
        return Err(TsdfError::Config(format!("bad depth range [{}, {}]", config.near, config.far)));
    }
    mesh.validate()?;
    let start = Instant::now();
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let (fx, fy, cx, cy) = (camera.fx(), camera.fy(), camera.cx(), camera.cy());
    let w_rot = pose.rotation_matrix().transpose();
    let t = *pose.translation();
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut color = vec![[0.0f64; 3]; w * h];

    for tri in &mesh.triangles {
        let idx = tri.map(|i| i as usize);
        if let Some(c) = crop {
            let centroid = idx.iter().map(|&i| Vector3::from(mesh.vertices[i])).sum::<Vector3<f64>>() / 3.0;
            if !c.contains(&centroid) {
                continue;
            }
        }
        let verts = idx.map(|i| {
            let p = w_rot * (Vector3::from(mesh.vertices[i]) - t);
            let c = mesh.colors[i];
            (p, Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        });
        if verts.iter().all(|v| v.0.z < config.near) || verts.iter().all(|v| v.0.z > config.far) {
            continue;
        }
        let poly = clip_near(verts, config.near);
        for k in 1..poly.len().saturating_sub(1) {
            let sub = [poly[0], poly[k], poly[k + 1]];
            let s = sub.map(|(p, _)| [fx * p.x / p.z + cx, fy * p.y / p.z + cy]);
            let iz = sub.map(|(p, _)| 1.0 / p.z);
            let area = edge(s[0], s[1], s[2]);
            if !(area.abs() > 1e-12) {
                continue;
            }
            let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            let x0 = (min_x - 0.5).ceil().max(0.0);
            let x1 = (max_x - 0.5).floor().min(w as f64 - 1.0);
            let y0 = (min_y - 0.5).ceil().max(0.0);
            let y1 = (max_y - 0.5).floor().min(h as f64 - 1.0);
            if !(x0 <= x1 && y0 <= y1) {
                continue;
            }
            for py in y0 as usize..=y1 as usize {
                for px in x0 as usize..=x1 as usize {
                    let p = [px as f64 + 0.5, py as f64 + 0.5];
                    let b0 = edge(s[1], s[2], p) / area;
                    let b1 = edge(s[2], s[0], p) / area;
                    let b2 = edge(s[0], s[1], p) / area;
                    if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                        continue;
                    }
                    let inv = b0 * iz[0] + b1 * iz[1] + b2 * iz[2];
                    let z = 1.0 / inv;
                    let i = py * w + px;
                    if z > config.far || z >= zbuf[i] {
                        continue;
                    }
                    zbuf[i] = z;
                    for c in 0..3 {
                        color[i][c] = (b0 * iz[0] * sub[0].1[c] + b1 * iz[1] * sub[1].1[c] + b2 * iz[2] * sub[2].1[c]) / inv;
                    }
                }
            }
        }
    }

    let bg = config.background;
    let (near, far) = (config.near, config.far);
    Ok(RenderProduct {
        rgb: RgbImage::from_fn(w, h, |x, y| {
            let i = y * w + x;
            let c = if zbuf[i].is_finite() { color[i] } else { bg };
            c.map(|v| v.clamp(0.0, 1.0) as f32)
        }),
        depth: DepthImage::from_fn(w, h, |x, y| {
            let z = zbuf[y * w + x];
            (if z.is_finite() { z.clamp(near, far) } else { far }) as f32
        }),
        opacity: DepthImage::from_fn(w, h, |x, y| if zbuf[y * w + x].is_finite() { 1.0 } else { 0.0 }),
        render_time: start.elapsed().as_secs_f64(),
    })
}

/// Read-only snapshot renderer.
#[derive(Debug, Clone)]
pub struct MeshRenderer {
    pub mesh: Arc<TriangleMesh>,
    pub config: MeshRenderConfig,
}

impl MeshRenderer {
    pub fn new(mesh: Arc<TriangleMesh>, config: MeshRenderConfig) -> Self {
        Self { mesh, config }
    }
}

impl SceneRenderer for MeshRenderer {
    fn render(&self, camera: &PinholeCamera, pose: &Pose, crop: Option<&Aabb>) -> Result<RenderProduct, RenderError> {
        if !camera.rectified() {
            return Err(RenderError::NotRectified);
        }
        rasterize_mesh(&self.mesh, camera, pose, crop, &self.config).map_err(|e| RenderError::Backend(e.to_string()))
    }
}
