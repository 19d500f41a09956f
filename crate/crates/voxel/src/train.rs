use std::time::Instant;

use rayon::prelude::*;
use rfnode_core::optim::{Adam, AdamConfig};
use rfnode_core::sh::{sigmoid, SH_C0, SH_C1, SH_COEFFS};
use rfnode_core::{Aabb, Ray, TrainStats, Vector3};
use rfnode_ingest::{KeyframeEntry, RayBatch};

use crate::error::VoxelError;
use crate::grid::VoxelGrid;
use crate::render::{integration_interval, march, MarchSample, RayOutput};

/// Hyperparameters for marching and training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelConfig {
    pub step_size: f64,
    pub rays_per_batch: usize,
    pub samples_per_ray: usize,
    /// Camera-frame z clip planes, meters.
    pub near: f64,
    pub far: f64,
    pub depth_loss_weight: f64,
    pub background: [f64; 3],
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for VoxelConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            rays_per_batch: 4096,
            samples_per_ray: 96,
            near: 0.05,
            far: 10.0,
            depth_loss_weight: 0.05,
            background: [0.0; 3],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl VoxelConfig {
    pub fn validate(&self) -> Result<(), VoxelError> {
        let bad = |s: &str| Err(VoxelError::Config(s.into()));
        if !(self.near > 0.0 && self.near < self.far) {
            return bad("need 0 < near < far");
        }
        if self.rays_per_batch == 0 || self.samples_per_ray == 0 {
            return bad("counts must be at least 1");
        }
        if !(self.step_size > 0.0) || self.depth_loss_weight < 0.0 {
            return bad("step size must be positive and depth weight non-negative");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.step_size, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    /// Mean over rays of the squared color error summed over channels.
    pub photometric: f64,
    /// Mean absolute camera-frame z error over rays with valid depth.
    pub depth: f64,
    /// `photometric + λ_d · depth`.
    pub total: f64,
}

/// Gradients laid out like the grid parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrad {
    pub density: Vec<f64>,
    pub sh: Vec<f64>,
}

/// Upstream gradient at one sample, before trilinear scatter.
#[derive(Debug, Clone, Copy)]
struct SampleGrad {
    corner: [u32; 3],
    frac: [f64; 3],
    g_raw: f64,
    g_pre: [f64; 3],
    dir: [f64; 3],
}

struct RayResult {
    photometric: f64,
    depth: Option<f64>,
    grads: Vec<SampleGrad>,
}

fn backward_ray(
    samples: &[MarchSample],
    delta: f64,
    dir: [f64; 3],
    g_rgb: [f64; 3],
    g_depth: f64,
    background: [f64; 3],
    far: f64,
) -> Vec<SampleGrad> {
    let mut out = Vec::with_capacity(samples.len());
    // back-to-front remainders: R_c after sample i, R_d likewise
    let mut rem = background;
    let mut rem_d = far;
    for s in samples.iter().rev() {
        let mut g_alpha = g_depth * s.trans * (s.t - rem_d);
        for c in 0..3 {
            g_alpha += g_rgb[c] * s.trans * (s.color[c] - rem[c]);
        }
        let g_sigma = g_alpha * delta * (1.0 - s.alpha);
        let g_raw = g_sigma * sigmoid(s.raw);
        let w = s.trans * s.alpha;
        let g_pre = [0, 1, 2].map(|c| g_rgb[c] * w * s.color[c] * (1.0 - s.color[c]));
        if g_raw != 0.0 || g_pre.iter().any(|&g| g != 0.0) {
            out.push(SampleGrad { corner: s.stencil.corner, frac: s.stencil.frac, g_raw, g_pre, dir });
        }
        for c in 0..3 {
            rem[c] = s.alpha * s.color[c] + (1.0 - s.alpha) * rem[c];
        }
        rem_d = s.alpha * s.t + (1.0 - s.alpha) * rem_d;
    }
    out
}

/// Loss and analytic gradient on a batch. Deterministic: rays are processed
/// independently and scattered into the gradient in a fixed order per
/// z-slab, independent of the thread count.
pub fn loss_and_grad(grid: &VoxelGrid, batch: &RayBatch, config: &VoxelConfig) -> Result<(LossParts, VoxelGrad), VoxelError> {
    if batch.is_empty() {
        return Err(VoxelError::EmptyBatch);
    }
    let n_rays = batch.len() as f64;
    let use_depth = config.depth_loss_weight > 0.0;
    let n_depth = batch.rays.iter().filter(|r| r.target_depth.is_some()).count();
    let results: Vec<RayResult> = batch
        .rays
        .par_iter()
        .map(|r| {
            let ray = Ray { origin: r.origin, direction: r.direction };
            let cos = r.z_scale;
            let far_t = config.far / cos;
            let mut samples = Vec::with_capacity(config.samples_per_ray);
            let iv = integration_interval(grid, &ray, None, config.near / cos, far_t);
            let (out, delta) = match iv {
                Some(iv) => (
                    march(grid, &ray, iv, config.samples_per_ray, config.background, far_t, Some(&mut samples)),
                    (iv.1 - iv.0) / config.samples_per_ray as f64,
                ),
                None => (RayOutput::empty(config.background, far_t), 0.0),
            };
            let mut photometric = 0.0;
            let mut g_rgb = [0.0; 3];
            for c in 0..3 {
                let e = out.rgb[c] - r.target_rgb[c] as f64;
                photometric += e * e;
                g_rgb[c] = 2.0 * e / n_rays;
            }
            let mut depth = None;
            let mut g_depth = 0.0;
            if let Some(target) = r.target_depth {
                let e = out.depth * cos - target as f64;
                depth = Some(e.abs());
                if use_depth {
                    g_depth = config.depth_loss_weight * e.signum() * cos / n_depth as f64;
                }
            }
            let dir = [ray.direction.x, ray.direction.y, ray.direction.z];
            let grads = backward_ray(&samples, delta, dir, g_rgb, g_depth, config.background, far_t);
            RayResult { photometric, depth, grads }
        })
        .collect();

    let photometric = results.iter().map(|r| r.photometric).sum::<f64>() / n_rays;
    let depth = if n_depth > 0 {
        results.iter().filter_map(|r| r.depth).sum::<f64>() / n_depth as f64
    } else {
        0.0
    };
    let parts = LossParts { photometric, depth, total: photometric + config.depth_loss_weight * depth };
    if !parts.total.is_finite() {
        return Err(VoxelError::NonFinite { photometric, depth });
    }
    Ok((parts, scatter(grid, &results)))
}

fn scatter(grid: &VoxelGrid, results: &[RayResult]) -> VoxelGrad {
    let [nx, ny, nz] = grid.resolution();
    // stable bucket sort of sample gradients by lower z corner
    let mut counts = vec![0usize; nz];
    for g in results.iter().flat_map(|r| &r.grads) {
        counts[g.corner[2] as usize] += 1;
    }
    let mut starts = vec![0usize; nz + 1];
    for z in 0..nz {
        starts[z + 1] = starts[z] + counts[z];
    }
    let all: Vec<&SampleGrad> = results.iter().flat_map(|r| &r.grads).collect();
    let mut fill = starts.clone();
    let mut order = vec![0usize; all.len()];
    for (i, g) in all.iter().enumerate() {
        let z = g.corner[2] as usize;
        order[fill[z]] = i;
        fill[z] += 1;
    }

    let slab = nx * ny;
    let mut density = vec![0.0; grid.cell_count()];
    let mut sh = vec![0.0; grid.cell_count() * SH_COEFFS];
    density
        .par_chunks_mut(slab)
        .zip(sh.par_chunks_mut(slab * SH_COEFFS))
        .enumerate()
        .for_each(|(z, (gd, gs))| {
            let lower = if z > 0 { &order[starts[z - 1]..starts[z]] } else { &[][..] };
            let upper = &order[starts[z]..starts[z + 1]];
            for (bucket, dz) in [(lower, 1usize), (upper, 0usize)] {
                for g in bucket.iter().map(|&i| all[i]) {
                    let fz = g.frac[2];
                    let wz = if dz == 1 { fz } else { 1.0 - fz };
                    if wz == 0.0 {
                        continue;
                    }
                    let [x0, y0, _] = g.corner.map(|c| c as usize);
                    let [fx, fy, _] = g.frac;
                    let mut k = [0.0; SH_COEFFS];
                    for c in 0..3 {
                        k[c * 4] = g.g_pre[c] * SH_C0;
                        k[c * 4 + 1] = g.g_pre[c] * SH_C1 * g.dir[0];
                        k[c * 4 + 2] = g.g_pre[c] * SH_C1 * g.dir[1];
                        k[c * 4 + 3] = g.g_pre[c] * SH_C1 * g.dir[2];
                    }
                    for dy in 0..2 {
                        let wy = if dy == 0 { 1.0 - fy } else { fy };
                        for dx in 0..2 {
                            let wx = if dx == 0 { 1.0 - fx } else { fx };
                            let w = wx * wy * wz;
                            if w == 0.0 {
                                continue;
                            }
                            let i = (x0 + dx) + nx * (y0 + dy);
                            gd[i] += w * g.g_raw;
                            let row = &mut gs[i * SH_COEFFS..(i + 1) * SH_COEFFS];
                            for (o, v) in row.iter_mut().zip(&k) {
                                *o += w * v;
                            }
                        }
                    }
                }
            }
        });
    VoxelGrad { density, sh }
}

/// Owns a grid and its optimizer state.
#[derive(Debug, Clone)]
pub struct VoxelTrainer {
    grid: VoxelGrid,
    config: VoxelConfig,
    adam_density: Adam,
    adam_sh: Adam,
}

impl VoxelTrainer {
    pub fn new(grid: VoxelGrid, config: VoxelConfig) -> Result<Self, VoxelError> {
        config.validate()?;
        let adam_density = Adam::new(config.adam(), grid.density().len());
        let adam_sh = Adam::new(config.adam(), grid.sh().len());
        Ok(Self { grid, config, adam_density, adam_sh })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn into_grid(self) -> VoxelGrid {
        self.grid
    }

    pub fn config(&self) -> &VoxelConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.adam_density.steps()
    }

    /// One Adam step. A non-finite loss leaves the parameters untouched.
    pub fn train_step(&mut self, batch: &RayBatch) -> Result<TrainStats, VoxelError> {
        let start = Instant::now();
        let (loss, grad) = loss_and_grad(&self.grid, batch, &self.config)?;
        let (density, sh) = self.grid.params_mut();
        self.adam_density.step(density, &grad.density);
        self.adam_sh.step(sh, &grad.sh);
        Ok(TrainStats {
            photometric_loss: loss.photometric,
            depth_loss: loss.depth,
            step_time: start.elapsed().as_secs_f64(),
        })
    }
}

/// Bounding box of the back-projected valid depth of `entries`, grown by
/// `margin` times its largest extent. `None` without any valid depth.
pub fn scene_bounds(entries: &[KeyframeEntry], margin: f64) -> Option<Aabb> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for e in entries {
        let Some(depth) = &e.depth else { continue };
        let (w, h) = depth.dims();
        let rot = e.pose.rotation_matrix();
        for y in 0..h {
            for x in 0..w {
                let z = depth.get(x, y) as f64;
                if z <= 0.0 {
                    continue;
                }
                let d = e.camera.pixel_direction(x as f64, y as f64);
                let p = e.pose.translation() + rot * (d * z);
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
    }
    if !lo.iter().all(|v| v.is_finite()) {
        return None;
    }
    let pad = (hi - lo).max() * margin + 1e-3;
    Aabb::new((lo.add_scalar(-pad)).into(), (hi.add_scalar(pad)).into()).ok()
}
