use rfnode_core::{Pose, RgbImage};

/// Admission thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPolicy {
    /// Minimum variance of the Laplacian of the `[0, 1]` gray image.
    pub blur_threshold: f64,
    /// Minimum nearest-keyframe pose distance, meters.
    pub novelty_threshold: f64,
    /// Meters charged per radian of rotation in the pose distance.
    pub rotation_weight: f64,
    /// Keyframes collected before online training starts.
    pub initial_batch_size: usize,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            blur_threshold: 0.0025,
            novelty_threshold: 0.05,
            rotation_weight: 0.5,
            initial_batch_size: 5,
        }
    }
}

impl FilterPolicy {
    /// Admits every frame that is not an exact duplicate of nothing.
    pub fn permissive() -> Self {
        Self {
            blur_threshold: 0.0,
            novelty_threshold: 0.0,
            rotation_weight: 0.0,
            initial_batch_size: 1,
        }
    }
}

/// Variance of the 3×3 Laplacian response over interior pixels of the luma
/// image. Images without interior pixels score 0.
pub fn blur_score(rgb: &RgbImage) -> f64 {
    let gray = rgb.to_gray();
    let (w, h) = gray.dims();
    if w < 3 || h < 3 {
        return 0.0;
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let lap = gray.get(x, y - 1) + gray.get(x - 1, y) + gray.get(x + 1, y) + gray.get(x, y + 1)
                - 4.0 * gray.get(x, y);
            sum += lap;
            sum_sq += lap * lap;
        }
    }
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}

/// Translation distance plus `rotation_weight` times the geodesic angle.
pub fn pose_distance(a: &Pose, b: &Pose, rotation_weight: f64) -> f64 {
    (a.translation() - b.translation()).norm() + rotation_weight * a.angle_to(b)
}

/// Distance from `candidate` to its nearest stored pose; `+∞` when there are none.
pub fn pose_novelty<'a>(
    candidate: &Pose,
    stored: impl IntoIterator<Item = &'a Pose>,
    rotation_weight: f64,
) -> f64 {
    stored
        .into_iter()
        .map(|p| pose_distance(candidate, p, rotation_weight))
        .fold(f64::INFINITY, f64::min)
}
