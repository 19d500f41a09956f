use std::collections::{BTreeSet, HashMap};

use nalgebra::Vector3;
use rayon::prelude::*;
use rfnode_core::FrameSample;

use crate::error::TsdfError;

pub const BLOCK_SIDE: usize = 8;
const BLOCK_VOXELS: usize = BLOCK_SIDE * BLOCK_SIDE * BLOCK_SIDE;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsdfConfig {
    /// Meters.
    pub voxel_size: f64,
    /// Meters; `None` means `4 × voxel_size`.
    pub truncation: Option<f64>,
    pub max_weight: f32,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        Self { voxel_size: 0.01, truncation: None, max_weight: 100.0 }
    }
}

impl TsdfConfig {
    pub fn truncation(&self) -> f64 {
        self.truncation.unwrap_or(4.0 * self.voxel_size)
    }

    pub fn validate(&self) -> Result<(), TsdfError> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(TsdfError::Config(format!("voxel_size must be positive, got {}", self.voxel_size)));
        }
        let tau = self.truncation();
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(TsdfError::Config(format!("truncation must be positive, got {tau}")));
        }
        if !(self.max_weight >= 1.0 && self.max_weight.is_finite()) {
            return Err(TsdfError::Config(format!("max_weight must be >= 1, got {}", self.max_weight)));
        }
        Ok(())
    }
}

/// One fused voxel. `weight == 0` means never observed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Voxel {
    /// Signed distance over truncation, in `[-1, 1]`; positive in front of
    /// the surface.
    pub tsdf: f32,
    pub weight: f32,
    pub rgb: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    pub voxels: Vec<Voxel>,
}

impl Block {
    fn new() -> Self {
        Self { voxels: vec![Voxel::default(); BLOCK_VOXELS] }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrateStats {
    pub voxels_updated: usize,
    pub blocks_allocated: usize,
}

/// Sparse TSDF volume. Voxel `(i, j, k)` has its center at
/// `(i + 0.5, j + 0.5, k + 0.5) · voxel_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfGrid {
    config: TsdfConfig,
    blocks: HashMap<[i64; 3], Block>,
}

fn split(v: i64) -> (i64, usize) {
    let side = BLOCK_SIDE as i64;
    (v.div_euclid(side), v.rem_euclid(side) as usize)
}

fn local_index(x: usize, y: usize, z: usize) -> usize {
    x + BLOCK_SIDE * (y + BLOCK_SIDE * z)
}

impl TsdfGrid {
    pub fn new(config: TsdfConfig) -> Result<Self, TsdfError> {
        config.validate()?;
        Ok(Self { config, blocks: HashMap::new() })
    }

    pub fn config(&self) -> &TsdfConfig {
        &self.config
    }

    pub fn voxel_size(&self) -> f64 {
        self.config.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.config.truncation()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block keys in ascending order.
    pub fn block_keys(&self) -> Vec<[i64; 3]> {
        let mut keys: Vec<[i64; 3]> = self.blocks.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn voxel_center(&self, idx: [i64; 3]) -> Vector3<f64> {
        let s = self.config.voxel_size;
        Vector3::new((idx[0] as f64 + 0.5) * s, (idx[1] as f64 + 0.5) * s, (idx[2] as f64 + 0.5) * s)
    }

    /// Index of the voxel containing `p`.
    pub fn voxel_index(&self, p: &Vector3<f64>) -> [i64; 3] {
        let s = self.config.voxel_size;
        [(p.x / s).floor() as i64, (p.y / s).floor() as i64, (p.z / s).floor() as i64]
    }

    /// Observed voxel at a global index.
    pub fn voxel(&self, idx: [i64; 3]) -> Option<&Voxel> {
        let (bx, lx) = split(idx[0]);
        let (by, ly) = split(idx[1]);
        let (bz, lz) = split(idx[2]);
        let v = &self.blocks.get(&[bx, by, bz])?.voxels[local_index(lx, ly, lz)];
        (v.weight > 0.0).then_some(v)
    }

    pub(crate) fn block(&self, key: &[i64; 3]) -> Option<&Block> {
        self.blocks.get(key)
    }

    /// All observed voxels with their global indices, in block-key order.
    pub fn observed(&self) -> Vec<([i64; 3], Voxel)> {
        let mut out = Vec::new();
        for key in self.block_keys() {
            let block = &self.blocks[&key];
            for z in 0..BLOCK_SIDE {
                for y in 0..BLOCK_SIDE {
                    for x in 0..BLOCK_SIDE {
                        let v = block.voxels[local_index(x, y, z)];
                        if v.weight > 0.0 {
                            let s = BLOCK_SIDE as i64;
                            out.push(([key[0] * s + x as i64, key[1] * s + y as i64, key[2] * s + z as i64], v));
                        }
                    }
                }
            }
        }
        out
    }

    /// Projective fusion of one RGBD frame. Voxels whose center projects to a
    /// valid depth pixel with `|depth − z_voxel| ≤ τ` take a unit-weight
    /// update of their running tsdf and color averages.
    pub fn integrate_frame(&mut self, frame: &FrameSample) -> Result<IntegrateStats, TsdfError> {
        let depth = frame.depth.as_ref().ok_or(TsdfError::MissingDepth(frame.seq))?;
        if !frame.camera.rectified() {
            return Err(TsdfError::NotRectified);
        }
        let cam = &frame.camera;
        let (w, h) = depth.dims();
        depth.ensure_dims(cam.width() as usize, cam.height() as usize)?;
        frame.rgb.ensure_dims(w, h)?;
        let tau = self.truncation();
        let s = self.config.voxel_size;
        let rot = frame.pose.rotation_matrix();
        let origin = *frame.pose.translation();

        // blocks intersected by the truncation band of every valid pixel
        let steps = (2.0 * tau / (0.5 * s)).ceil() as i64;
        let touched: BTreeSet<[i64; 3]> = (0..h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let mut keys = Vec::new();
                for x in 0..w {
                    let d = depth.get(x, y) as f64;
                    if !(d > 0.0 && d.is_finite()) {
                        continue;
                    }
                    let dir = rot * cam.pixel_direction(x as f64, y as f64);
                    for k in 0..=steps {
                        let z = d - tau + 2.0 * tau * k as f64 / steps as f64;
                        if z <= 0.0 {
                            continue;
                        }
                        let idx = self.voxel_index(&(origin + dir * z));
                        keys.push([split(idx[0]).0, split(idx[1]).0, split(idx[2]).0]);
                    }
                }
                keys.sort_unstable();
                keys.dedup();
                keys
            })
            .collect();

        let mut stats = IntegrateStats::default();
        let mut work: Vec<([i64; 3], Block)> = touched
            .into_iter()
            .map(|key| {
                let block = self.blocks.remove(&key).unwrap_or_else(|| {
                    stats.blocks_allocated += 1;
                    Block::new()
                });
                (key, block)
            })
            .collect();

        let w_rot = rot.transpose();
        let max_weight = self.config.max_weight;
        let updated: usize = work
            .par_iter_mut()
            .map(|(key, block)| {
                let mut count = 0;
                for z in 0..BLOCK_SIDE {
                    for y in 0..BLOCK_SIDE {
                        for x in 0..BLOCK_SIDE {
                            let side = BLOCK_SIDE as i64;
                            let g = [key[0] * side + x as i64, key[1] * side + y as i64, key[2] * side + z as i64];
                            let c = Vector3::new((g[0] as f64 + 0.5) * s, (g[1] as f64 + 0.5) * s, (g[2] as f64 + 0.5) * s);
                            let pc = w_rot * (c - origin);
                            let Some((u, v)) = cam.project(&pc) else { continue };
                            if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
                                continue;
                            }
                            let (px, py) = (u as usize, v as usize);
                            let d = depth.get(px, py) as f64;
                            if !(d > 0.0 && d.is_finite()) {
                                continue;
                            }
                            let sdf = d - pc.z;
                            if sdf.abs() > tau {
                                continue;
                            }
                            let value = (sdf / tau) as f32;
                            let color = frame.rgb.get(px, py);
                            let vox = &mut block.voxels[local_index(x, y, z)];
                            let wn = vox.weight + 1.0;
                            vox.tsdf = (vox.tsdf * vox.weight + value) / wn;
                            for ch in 0..3 {
                                vox.rgb[ch] = (vox.rgb[ch] * vox.weight + color[ch]) / wn;
                            }
                            vox.tsdf = vox.tsdf.clamp(-1.0, 1.0);
                            vox.weight = wn.min(max_weight);
                            count += 1;
                        }
                    }
                }
                count
            })
            .sum();
        stats.voxels_updated = updated;
        for (key, block) in work {
            if block.voxels.iter().any(|v| v.weight > 0.0) {
                self.blocks.insert(key, block);
            } else {
                stats.blocks_allocated = stats.blocks_allocated.saturating_sub(1);
            }
        }
        Ok(stats)
    }
}

pub(crate) fn block_and_local(idx: [i64; 3]) -> ([i64; 3], usize) {
    let (bx, lx) = split(idx[0]);
    let (by, ly) = split(idx[1]);
    let (bz, lz) = split(idx[2]);
    ([bx, by, bz], local_index(lx, ly, lz))
}
