use nalgebra::{Matrix3, Vector3};
use rfnode_core::optim::Adam;
use rfnode_core::sh::{sigmoid, SH_COEFFS};

/// Gaussian parameters, one row per Gaussian in each group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplatSet {
    /// 3 per Gaussian, meters.
    pub means: Vec<f64>,
    /// 3 per Gaussian; activated scale is `exp`.
    pub log_scales: Vec<f64>,
    /// 4 per Gaussian, `(w, x, y, z)`; normalized when used.
    pub rotations: Vec<f64>,
    /// 1 per Gaussian; activated opacity is `sigmoid`.
    pub opacity_logits: Vec<f64>,
    /// 12 per Gaussian, channel-major degree-1 SH.
    pub colors: Vec<f64>,
}

pub(crate) const ROW_LENS: [usize; 5] = [3, 3, 4, 1, SH_COEFFS];

impl SplatSet {
    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logits.is_empty()
    }

    pub fn push(&mut self, mean: [f64; 3], log_scale: [f64; 3], rotation: [f64; 4], opacity_logit: f64, color: [f64; SH_COEFFS]) {
        self.means.extend_from_slice(&mean);
        self.log_scales.extend_from_slice(&log_scale);
        self.rotations.extend_from_slice(&rotation);
        self.opacity_logits.push(opacity_logit);
        self.colors.extend_from_slice(&color);
    }

    pub fn append(&mut self, other: &SplatSet) {
        self.means.extend_from_slice(&other.means);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.rotations.extend_from_slice(&other.rotations);
        self.opacity_logits.extend_from_slice(&other.opacity_logits);
        self.colors.extend_from_slice(&other.colors);
    }

    pub fn mean(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.means[3 * i], self.means[3 * i + 1], self.means[3 * i + 2])
    }

    pub fn scale(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.log_scales[3 * i].exp(), self.log_scales[3 * i + 1].exp(), self.log_scales[3 * i + 2].exp())
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn color(&self, i: usize) -> &[f64] {
        &self.colors[i * SH_COEFFS..(i + 1) * SH_COEFFS]
    }

    pub fn raw_rotation(&self, i: usize) -> [f64; 4] {
        [self.rotations[4 * i], self.rotations[4 * i + 1], self.rotations[4 * i + 2], self.rotations[4 * i + 3]]
    }

    pub fn rotation_matrix(&self, i: usize) -> Matrix3<f64> {
        quat_to_rotation(normalized(self.raw_rotation(i)))
    }

    /// World covariance `R · diag(s²) · Rᵀ`.
    pub fn covariance(&self, i: usize) -> Matrix3<f64> {
        let r = self.rotation_matrix(i);
        let s = self.scale(i);
        r * Matrix3::from_diagonal(&s.component_mul(&s)) * r.transpose()
    }

    pub(crate) fn groups_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.means, &mut self.log_scales, &mut self.rotations, &mut self.opacity_logits, &mut self.colors]
    }

    pub(crate) fn groups(&self) -> [&Vec<f64>; 5] {
        [&self.means, &self.log_scales, &self.rotations, &self.opacity_logits, &self.colors]
    }

    pub fn normalize_rotations(&mut self) {
        for q in self.rotations.chunks_exact_mut(4) {
            let n = normalized([q[0], q[1], q[2], q[3]]);
            q.copy_from_slice(&n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn retain(&mut self, keep: &[bool]) {
        for (g, &row) in self.groups_mut().into_iter().zip(&ROW_LENS) {
            let mut out = Vec::with_capacity(g.len());
            for (chunk, &k) in g.chunks_exact(row).zip(keep) {
                if k {
                    out.extend_from_slice(chunk);
                }
            }
            *g = out;
        }
    }
}

pub(crate) fn normalized(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 1e-12 && n.is_finite() {
        q.map(|v| v / n)
    } else {
        [1.0, 0.0, 0.0, 0.0]
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub(crate) fn quat_to_rotation([w, x, y, z]: [f64; 4]) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Removes Gaussians whose activated opacity is below `threshold`, keeping
/// survivor order and dropping the matching optimizer rows.
pub fn prune(splats: &mut SplatSet, optimizers: Option<&mut [Adam; 5]>, threshold: f64) -> usize {
    let keep: Vec<bool> = (0..splats.len()).map(|i| splats.opacity(i) >= threshold).collect();
    let removed = keep.iter().filter(|k| !**k).count();
    if removed == 0 {
        return 0;
    }
    splats.retain(&keep);
    if let Some(opts) = optimizers {
        for (o, &row) in opts.iter_mut().zip(&ROW_LENS) {
            o.retain_rows(row, &keep);
        }
    }
    removed
}
