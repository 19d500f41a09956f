use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use rfnode_core::{Aabb, DepthImage, PinholeCamera, Pose, RenderError, RenderProduct, RgbImage, SceneRenderer};

use crate::error::SplatError;
use crate::project::{prepare, CameraFrame, Culled, Prepared};
use crate::set::SplatSet;
use crate::train::SplatConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    pub visible: usize,
    /// Gaussians skipped for a near-singular 2D covariance.
    pub singular: usize,
    /// Sum over tiles of the Gaussians binned to them.
    pub tile_entries: usize,
}

/// Depth-sorted visible Gaussians and their tile lists.
pub(crate) struct Binned {
    pub sorted: Vec<Prepared>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
    pub tile_size: usize,
    pub width: usize,
    pub height: usize,
    pub stats: RasterStats,
}

impl Binned {
    pub fn new(splats: &SplatSet, camera: &PinholeCamera, pose: &Pose, crop: Option<&Aabb>, config: &SplatConfig) -> Self {
        let frame = CameraFrame::new(camera, pose);
        let results: Vec<Result<Prepared, Culled>> = (0..splats.len())
            .into_par_iter()
            .map(|i| prepare(splats, i, &frame, camera, crop, config))
            .collect();
        let mut stats = RasterStats::default();
        let mut visible = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(p) => visible.push(p),
                Err(Culled::Singular) => stats.singular += 1,
                Err(Culled::Hidden) => {}
            }
        }
        // (depth, index) is a total order, so the unstable sort is deterministic
        let mut keys: Vec<(f64, u32)> = visible.iter().enumerate().map(|(k, p)| (p.depth, k as u32)).collect();
        keys.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let sorted: Vec<Prepared> = keys.iter().map(|&(_, k)| visible[k as usize]).collect();
        stats.visible = sorted.len();

        let ts = config.tile_size;
        let (width, height) = (camera.width() as usize, camera.height() as usize);
        let tiles_x = width.div_ceil(ts);
        let tiles_y = height.div_ceil(ts);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (j, p) in sorted.iter().enumerate() {
            let [x0, x1, y0, y1] = p.pixels.map(|v| v as usize / ts);
            for ty in y0..=y1 {
                for tx in x0..=x1 {
                    tiles[ty * tiles_x + tx].push(j as u32);
                }
            }
        }
        stats.tile_entries = tiles.iter().map(Vec::len).sum();
        Self { sorted, tiles, tiles_x, tile_size: ts, width, height, stats }
    }

    /// Pixel rectangle `(x0, x1, y0, y1)` (exclusive ends) of a tile.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, (x0 + self.tile_size).min(self.width), y0, (y0 + self.tile_size).min(self.height))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PixelOut {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub transmittance: f64,
}

/// Per-contributor record for the backward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contribution {
    /// Position in the tile list.
    pub slot: u32,
    /// Transmittance in front of this contributor.
    pub t: f64,
    pub alpha: f64,
    pub g: f64,
    pub clamped: bool,
    pub dx: f64,
    pub dy: f64,
}

/// Gaussian exponent `q = Δᵀ A Δ` for the pixel center offset.
#[inline]
pub(crate) fn falloff(p: &Prepared, px: f64, py: f64) -> (f64, f64, f64) {
    let dx = px - p.mean2d[0];
    let dy = py - p.mean2d[1];
    let [a, b, c] = p.conic;
    let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
    ((-0.5 * q).exp(), dx, dy)
}

/// Slots of a tile list (indices into `sorted`, depth ascending) whose
/// pixel rectangle covers row `y`, order kept.
pub(crate) fn row_slots(sorted: &[Prepared], list: &[u32], y: usize, out: &mut Vec<u32>) {
    out.clear();
    let yi = y as i64;
    for (slot, &j) in list.iter().enumerate() {
        let p = &sorted[j as usize];
        if yi >= p.pixels[2] && yi <= p.pixels[3] {
            out.push(slot as u32);
        }
    }
}

/// Front-to-back blend at pixel `(x, y)` over the tile-list positions
/// `slots`, which must be in list order.
pub(crate) fn blend_pixel(
    sorted: &[Prepared],
    list: &[u32],
    slots: &[u32],
    x: usize,
    y: usize,
    config: &SplatConfig,
    mut record: Option<&mut Vec<Contribution>>,
) -> PixelOut {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut t = 1.0;
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    let mut opacity = 0.0;
    let xi = x as i64;
    for &slot in slots {
        let p = &sorted[list[slot as usize] as usize];
        if xi < p.pixels[0] || xi > p.pixels[1] {
            continue;
        }
        let (g, dx, dy) = falloff(p, px, py);
        let raw = p.opacity * g;
        let alpha = raw.min(0.999);
        if alpha < config.alpha_min {
            continue;
        }
        let w = t * alpha;
        for c in 0..3 {
            rgb[c] += w * p.color[c];
        }
        depth += w * p.depth;
        opacity += w;
        if let Some(rec) = record.as_deref_mut() {
            rec.push(Contribution { slot, t, alpha, g, clamped: raw > 0.999, dx, dy });
        }
        t *= 1.0 - alpha;
        if t < config.transmittance_floor {
            break;
        }
    }
    for (c, v) in rgb.iter_mut().enumerate() {
        *v += t * config.background[c];
    }
    PixelOut { rgb, depth: depth + t * config.far, opacity, transmittance: t }
}

/// Full-precision tiled render, row-major pixels.
pub(crate) fn render_pixels(binned: &Binned, config: &SplatConfig) -> Vec<PixelOut> {
    let per_tile: Vec<Vec<PixelOut>> = (0..binned.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, x1, y0, y1) = binned.tile_rect(tile);
            let list = &binned.tiles[tile];
            let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
            let mut slots = Vec::new();
            for y in y0..y1 {
                row_slots(&binned.sorted, list, y, &mut slots);
                for x in x0..x1 {
                    out.push(blend_pixel(&binned.sorted, list, &slots, x, y, config, None));
                }
            }
            out
        })
        .collect();
    let empty = PixelOut { rgb: [0.0; 3], depth: 0.0, opacity: 0.0, transmittance: 1.0 };
    let mut pixels = vec![empty; binned.width * binned.height];
    for (tile, out) in per_tile.into_iter().enumerate() {
        let (x0, x1, y0, y1) = binned.tile_rect(tile);
        let mut it = out.into_iter();
        for y in y0..y1 {
            for x in x0..x1 {
                pixels[y * binned.width + x] = it.next().expect("tile pixel count");
            }
        }
    }
    pixels
}

/// Tile-based depth-sorted alpha blending.
pub fn rasterize(
    splats: &SplatSet,
    camera: &PinholeCamera,
    pose: &Pose,
    crop: Option<&Aabb>,
    config: &SplatConfig,
) -> Result<(RenderProduct, RasterStats), SplatError> {
    config.validate()?;
    if !camera.rectified() {
        return Err(SplatError::Config("camera must be rectified".into()));
    }
    let start = Instant::now();
    let binned = Binned::new(splats, camera, pose, crop, config);
    let pixels = render_pixels(&binned, config);
    let (w, h) = (binned.width, binned.height);
    let (near, far) = (config.near as f32, config.far as f32);
    let product = RenderProduct {
        rgb: RgbImage::from_fn(w, h, |x, y| pixels[y * w + x].rgb.map(|c| (c as f32).clamp(0.0, 1.0))),
        depth: DepthImage::from_fn(w, h, |x, y| (pixels[y * w + x].depth as f32).clamp(near, far)),
        opacity: DepthImage::from_fn(w, h, |x, y| (pixels[y * w + x].opacity as f32).clamp(0.0, 1.0)),
        render_time: start.elapsed().as_secs_f64(),
    };
    Ok((product, binned.stats))
}

/// Read-only snapshot renderer.
#[derive(Debug, Clone)]
pub struct SplatRenderer {
    pub splats: Arc<SplatSet>,
    pub config: SplatConfig,
}

impl SplatRenderer {
    pub fn new(splats: Arc<SplatSet>, config: SplatConfig) -> Self {
        Self { splats, config }
    }
}

impl SceneRenderer for SplatRenderer {
    fn render(&self, camera: &PinholeCamera, pose: &Pose, crop: Option<&Aabb>) -> Result<RenderProduct, RenderError> {
        if !camera.rectified() {
            return Err(RenderError::NotRectified);
        }
        rasterize(&self.splats, camera, pose, crop, &self.config)
            .map(|(p, _)| p)
            .map_err(|e| RenderError::Backend(e.to_string()))
    }
}
