use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfnode_core::{ray_for_pixel, Vector3};

use crate::buffer::KeyframeBuffer;
use crate::error::IngestError;

/// One supervised training ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRay {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub target_rgb: [f32; 3],
    /// Camera-frame z; absent when depth is disabled or the pixel is invalid.
    pub target_depth: Option<f32>,
    pub entry_index: usize,
    pub pixel: (u32, u32),
    /// Cosine between the ray and the optical axis, so `z = t · z_scale`.
    pub z_scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RayBatch {
    pub rays: Vec<TrainRay>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Draws `n_rays` training rays.
///
/// Half the batch (at least one ray per entry) is spread evenly over the
/// entries whose updated flag is set; the rest is uniform over all entries
/// and pixels. Entries that contribute rays have their flag cleared.
pub fn sample_batch(buffer: &mut KeyframeBuffer, n_rays: usize, rng_seed: u64) -> Result<RayBatch, IngestError> {
    if buffer.is_empty() {
        return Err(IngestError::EmptyBuffer);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let updated = buffer.updated_indices();
    let focus = if updated.is_empty() {
        0
    } else {
        (n_rays / 2).max(updated.len()).min(n_rays)
    };

    let mut picks: Vec<usize> = Vec::with_capacity(n_rays);
    if focus > 0 {
        let k = updated.len();
        for (j, &idx) in updated.iter().enumerate() {
            let count = focus / k + usize::from(j < focus % k);
            picks.extend(std::iter::repeat(idx).take(count));
        }
    }
    let total = buffer.len();
    while picks.len() < n_rays {
        picks.push(rng.gen_range(0..total));
    }

    let (w, h) = buffer.canonical_size();
    let mut rays = Vec::with_capacity(n_rays);
    for &idx in &picks {
        let entry = buffer.entry(idx).expect("index in range");
        let x = rng.gen_range(0..w);
        let y = rng.gen_range(0..h);
        let ray = ray_for_pixel(&entry.camera, &entry.pose, x as f64, y as f64)?;
        let axis = entry.pose.rotate(&Vector3::z());
        let target_depth = entry
            .depth
            .as_ref()
            .map(|d| d.get(x as usize, y as usize))
            .filter(|&d| d > 0.0);
        rays.push(TrainRay {
            origin: ray.origin,
            direction: ray.direction,
            target_rgb: entry.rgb.get(x as usize, y as usize),
            target_depth,
            entry_index: idx,
            pixel: (x, y),
            z_scale: ray.direction.dot(&axis),
        });
    }
    let mut seen = vec![false; total];
    for &idx in &picks {
        seen[idx] = true;
    }
    for (idx, s) in seen.into_iter().enumerate() {
        if s {
            buffer.clear_updated(idx);
        }
    }
    Ok(RayBatch { rays })
}
