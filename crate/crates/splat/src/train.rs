use std::time::Instant;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;
use rfnode_core::optim::{Adam, AdamConfig};
use rfnode_core::sh::{sh_color, SH_C0, SH_C1, SH_COEFFS};
use rfnode_core::{PinholeCamera, Pose, RgbImage, TrainStats};
use rfnode_ingest::KeyframeEntry;

use crate::error::SplatError;
use crate::project::CameraFrame;
use crate::raster::{blend_pixel, row_slots, Binned, Contribution};
use crate::set::{normalized, prune, quat_to_rotation, SplatSet, ROW_LENS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatConfig {
    pub lr_means: f64,
    pub lr_scales: f64,
    pub lr_rotations: f64,
    pub lr_opacity: f64,
    pub lr_colors: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub prune_opacity_threshold: f64,
    /// Steps between prunes; 0 disables pruning.
    pub prune_interval: u64,
    pub transmittance_floor: f64,
    pub tile_size: usize,
    /// Pixels², added to both diagonal entries of every 2D covariance.
    pub low_pass: f64,
    pub alpha_min: f64,
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            lr_means: 2.5e-4,
            lr_scales: 5e-3,
            lr_rotations: 1e-3,
            lr_opacity: 2.5e-2,
            lr_colors: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            prune_opacity_threshold: 0.005,
            prune_interval: 100,
            transmittance_floor: 1e-4,
            tile_size: 16,
            low_pass: 0.3,
            alpha_min: 1.0 / 255.0,
            near: 0.05,
            far: 10.0,
            background: [0.0; 3],
        }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<(), SplatError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(SplatError::Config(format!("{name} must be in (0, 1), got {v}")))
            }
        };
        unit("prune_opacity_threshold", self.prune_opacity_threshold)?;
        unit("transmittance_floor", self.transmittance_floor)?;
        unit("alpha_min", self.alpha_min)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if self.tile_size == 0 {
            return Err(SplatError::Config("tile_size must be >= 1".into()));
        }
        let lrs = [self.lr_means, self.lr_scales, self.lr_rotations, self.lr_opacity, self.lr_colors];
        if lrs.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return Err(SplatError::Config("learning rates must be finite and >= 0".into()));
        }
        if !(self.low_pass >= 0.0 && self.low_pass.is_finite()) {
            return Err(SplatError::Config("low_pass must be >= 0".into()));
        }
        if !(self.near > 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(SplatError::Config(format!("bad depth range [{}, {}]", self.near, self.far)));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(SplatError::Config("background must be in [0, 1]".into()));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    fn group_lrs(&self) -> [f64; 5] {
        [self.lr_means, self.lr_scales, self.lr_rotations, self.lr_opacity, self.lr_colors]
    }
}

/// Gradient in the same layout as [`SplatSet`].
pub type SplatGrad = SplatSet;

fn zeros_like(splats: &SplatSet) -> SplatGrad {
    SplatSet {
        means: vec![0.0; splats.means.len()],
        log_scales: vec![0.0; splats.log_scales.len()],
        rotations: vec![0.0; splats.rotations.len()],
        opacity_logits: vec![0.0; splats.opacity_logits.len()],
        colors: vec![0.0; splats.colors.len()],
    }
}

/// Screen-space gradient of one sorted Gaussian:
/// `[u, v, a, b, c, opacity, r, g, b]` with conic `(a, b, c)`.
type ScreenGrad = [f64; 9];

/// `mean over pixels of ‖rendered − target‖²` and its gradient.
pub fn loss_and_grad(
    splats: &SplatSet,
    camera: &PinholeCamera,
    pose: &Pose,
    target: &RgbImage,
    config: &SplatConfig,
) -> Result<(f64, SplatGrad), SplatError> {
    config.validate()?;
    let expected = (camera.width() as usize, camera.height() as usize);
    if target.dims() != expected {
        return Err(SplatError::TargetSize { expected, actual: target.dims() });
    }
    let binned = Binned::new(splats, camera, pose, None, config);
    let n_pix = (expected.0 * expected.1) as f64;

    let per_tile: Vec<(f64, Vec<ScreenGrad>)> = (0..binned.tiles.len())
        .into_par_iter()
        .map(|tile| tile_backward(&binned, tile, target, n_pix, config))
        .collect();

    let mut loss = 0.0;
    let mut screen = vec![[0.0; 9]; binned.sorted.len()];
    for (tile, (tile_loss, local)) in per_tile.into_iter().enumerate() {
        loss += tile_loss;
        for (slot, &j) in binned.tiles[tile].iter().enumerate() {
            let acc = &mut screen[j as usize];
            for (a, g) in acc.iter_mut().zip(&local[slot]) {
                *a += g;
            }
        }
    }
    loss /= n_pix;

    let frame = CameraFrame::new(camera, pose);
    let param_grads: Vec<ParamGrad> = binned
        .sorted
        .par_iter()
        .zip(screen.par_iter())
        .map(|(p, sg)| gaussian_backward(splats, p.index, &frame, sg, config))
        .collect();

    let mut grad = zeros_like(splats);
    for (p, g) in binned.sorted.iter().zip(&param_grads) {
        let i = p.index;
        grad.means[3 * i..3 * i + 3].copy_from_slice(&g.mean);
        grad.log_scales[3 * i..3 * i + 3].copy_from_slice(&g.log_scale);
        grad.rotations[4 * i..4 * i + 4].copy_from_slice(&g.rotation);
        grad.opacity_logits[i] = g.opacity_logit;
        grad.colors[i * SH_COEFFS..(i + 1) * SH_COEFFS].copy_from_slice(&g.color);
    }
    Ok((loss, grad))
}

fn tile_backward(binned: &Binned, tile: usize, target: &RgbImage, n_pix: f64, config: &SplatConfig) -> (f64, Vec<ScreenGrad>) {
    let (x0, x1, y0, y1) = binned.tile_rect(tile);
    let list = &binned.tiles[tile];
    let mut local = vec![[0.0; 9]; list.len()];
    let mut loss = 0.0;
    let mut rec: Vec<Contribution> = Vec::new();
    let mut slots = Vec::new();
    for y in y0..y1 {
        row_slots(&binned.sorted, list, y, &mut slots);
        for x in x0..x1 {
            rec.clear();
            let out = blend_pixel(&binned.sorted, list, &slots, x, y, config, Some(&mut rec));
            let tgt = target.get(x, y);
            let mut g_c = [0.0; 3];
            for c in 0..3 {
                let e = out.rgb[c] - tgt[c] as f64;
                loss += e * e;
                g_c[c] = 2.0 * e / n_pix;
            }
            // back to front; `behind` is the normalized color seen through
            // the current contributor
            let mut behind = config.background;
            for ct in rec.iter().rev() {
                let p = &binned.sorted[list[ct.slot as usize] as usize];
                let t_before = ct.t;
                let w = t_before * ct.alpha;
                let acc = &mut local[ct.slot as usize];
                let mut g_alpha = 0.0;
                for c in 0..3 {
                    acc[6 + c] += w * g_c[c];
                    g_alpha += g_c[c] * t_before * (p.color[c] - behind[c]);
                    behind[c] = ct.alpha * p.color[c] + (1.0 - ct.alpha) * behind[c];
                }
                if ct.clamped {
                    continue;
                }
                acc[5] += g_alpha * ct.g;
                let g_g = g_alpha * p.opacity;
                let g_q = -0.5 * ct.g * g_g;
                let [a, b, c] = p.conic;
                acc[0] += g_q * -2.0 * (a * ct.dx + b * ct.dy);
                acc[1] += g_q * -2.0 * (b * ct.dx + c * ct.dy);
                acc[2] += g_q * ct.dx * ct.dx;
                acc[3] += g_q * 2.0 * ct.dx * ct.dy;
                acc[4] += g_q * ct.dy * ct.dy;
            }
        }
    }
    (loss, local)
}

struct ParamGrad {
    mean: [f64; 3],
    log_scale: [f64; 3],
    rotation: [f64; 4],
    opacity_logit: f64,
    color: [f64; SH_COEFFS],
}

fn gaussian_backward(splats: &SplatSet, i: usize, frame: &CameraFrame, sg: &ScreenGrad, config: &SplatConfig) -> ParamGrad {
    let mean = splats.mean(i);
    let m = frame.to_camera(&mean);
    let (x, y, z) = (m.x, m.y, m.z);
    let (fx, fy) = (frame.fx, frame.fy);

    // conic (a, b, c) = inverse of (p, r, s)
    let raw_q = splats.raw_rotation(i);
    let q = normalized(raw_q);
    let rot = quat_to_rotation(q);
    let s = splats.scale(i);
    let d = Matrix3::from_diagonal(&s.component_mul(&s));
    let sigma = rot * d * rot.transpose();
    let j = frame.jacobian(&m);
    let mm = j * frame.w;
    let v2 = mm * sigma * mm.transpose();
    let p = v2[(0, 0)] + config.low_pass;
    let r = 0.5 * (v2[(0, 1)] + v2[(1, 0)]);
    let s_ = v2[(1, 1)] + config.low_pass;
    let det = p * s_ - r * r;
    let det2 = det * det;
    let [gu, gv, ga, gb, gcc, g_op, ..] = *sg;
    let g_p = ga * (-s_ * s_ / det2) + gb * (r * s_ / det2) + gcc * (1.0 / det - p * s_ / det2);
    let g_r = ga * (2.0 * s_ * r / det2) + gb * (-1.0 / det - 2.0 * r * r / det2) + gcc * (2.0 * p * r / det2);
    let g_s = ga * (1.0 / det - s_ * p / det2) + gb * (r * p / det2) + gcc * (-p * p / det2);
    let g_cov = Matrix2::new(g_p, 0.5 * g_r, 0.5 * g_r, g_s);

    let g_sigma = mm.transpose() * g_cov * mm;
    let g_m = 2.0 * g_cov * mm * sigma;
    let g_j = g_m * frame.w.transpose();

    let mut g_cam = Vector3::new(gu * fx / z, gv * fy / z, -gu * fx * x / (z * z) - gv * fy * y / (z * z));
    let (iz2, iz3) = (1.0 / (z * z), 1.0 / (z * z * z));
    g_cam.x += g_j[(0, 2)] * (-fx * iz2);
    g_cam.y += g_j[(1, 2)] * (-fy * iz2);
    g_cam.z += g_j[(0, 0)] * (-fx * iz2)
        + g_j[(0, 2)] * (2.0 * fx * x * iz3)
        + g_j[(1, 1)] * (-fy * iz2)
        + g_j[(1, 2)] * (2.0 * fy * y * iz3);
    let mut g_mean = frame.w.transpose() * g_cam;

    // scale and rotation through Σ = R D Rᵀ
    let g_rot = 2.0 * g_sigma * rot * d;
    let rt_g_r = rot.transpose() * g_sigma * rot;
    let log_scale = [0, 1, 2].map(|k| rt_g_r[(k, k)] * 2.0 * d[(k, k)]);
    let rotation = quaternion_backward(q, raw_q, &g_rot);

    // opacity through the sigmoid
    let o = splats.opacity(i);
    let opacity_logit = g_op * o * (1.0 - o);

    // view-dependent color
    let offset = mean - frame.t;
    let dist = offset.norm();
    let dir = offset / dist;
    let coeffs = splats.color(i);
    let col = sh_color(coeffs, [dir.x, dir.y, dir.z]);
    let mut color = [0.0; SH_COEFFS];
    let mut g_dir = Vector3::zeros();
    for c in 0..3 {
        let g_pre = sg[6 + c] * col[c] * (1.0 - col[c]);
        let k = &coeffs[c * 4..c * 4 + 4];
        color[c * 4] = g_pre * SH_C0;
        for a in 0..3 {
            color[c * 4 + 1 + a] = g_pre * SH_C1 * dir[a];
            g_dir[a] += g_pre * SH_C1 * k[1 + a];
        }
    }
    g_mean += (g_dir - dir * dir.dot(&g_dir)) / dist;

    ParamGrad { mean: [g_mean.x, g_mean.y, g_mean.z], log_scale, rotation, opacity_logit, color }
}

/// Chains `dL/dR` through the quaternion-to-matrix map and normalization.
fn quaternion_backward(q: [f64; 4], raw: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = q;
    let g = |r: usize, c: usize| g[(r, c)];
    let gw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
        - 2.0 * x * g(2, 2));
    let gy = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
        - 2.0 * y * g(2, 2));
    let gz = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2)
        + x * g(2, 0)
        + y * g(2, 1));
    let gq = [gw, gx, gy, gz];
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return [0.0; 4];
    }
    let dot: f64 = gq.iter().zip(&q).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|k| (gq[k] - q[k] * dot) / norm)
}

/// Owns the Gaussians and one Adam state per parameter group.
#[derive(Debug, Clone)]
pub struct SplatTrainer {
    splats: SplatSet,
    config: SplatConfig,
    adams: [Adam; 5],
    steps: u64,
    pruned: usize,
}

impl SplatTrainer {
    pub fn new(splats: SplatSet, config: SplatConfig) -> Result<Self, SplatError> {
        config.validate()?;
        let lrs = config.group_lrs();
        let n = splats.len();
        let adams = [0, 1, 2, 3, 4].map(|g| Adam::new(config.adam(lrs[g]), ROW_LENS[g] * n));
        Ok(Self { splats, config, adams, steps: 0, pruned: 0 })
    }

    pub fn splats(&self) -> &SplatSet {
        &self.splats
    }

    pub fn into_splats(self) -> SplatSet {
        self.splats
    }

    pub fn config(&self) -> &SplatConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Total Gaussians removed by pruning so far.
    pub fn pruned(&self) -> usize {
        self.pruned
    }

    /// Appends Gaussians (online growth) with fresh optimizer rows.
    pub fn extend(&mut self, extra: &SplatSet) {
        self.splats.append(extra);
        for (a, &row) in self.adams.iter_mut().zip(&ROW_LENS) {
            a.grow(row * extra.len());
        }
    }

    pub fn prune(&mut self) -> usize {
        let removed = prune(&mut self.splats, Some(&mut self.adams), self.config.prune_opacity_threshold);
        self.pruned += removed;
        removed
    }

    /// One Adam step on the full image of `target`. A non-finite loss or
    /// gradient leaves the parameters untouched.
    pub fn train_step(&mut self, target: &KeyframeEntry) -> Result<TrainStats, SplatError> {
        let start = Instant::now();
        let (loss, grad) = loss_and_grad(&self.splats, &target.camera, &target.pose, &target.rgb, &self.config)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(SplatError::NonFinite(loss));
        }
        for ((adam, param), g) in self.adams.iter_mut().zip(self.splats.groups_mut()).zip(grad.groups()) {
            adam.step(param, g);
        }
        self.splats.normalize_rotations();
        self.steps += 1;
        if self.config.prune_interval > 0 && self.steps % self.config.prune_interval == 0 {
            self.prune();
        }
        Ok(TrainStats { photometric_loss: loss, depth_loss: 0.0, step_time: start.elapsed().as_secs_f64() })
    }
}
