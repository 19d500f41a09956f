use rfnode_core::{CoreError, Pose, Vector3};
use serde::{Deserialize, Serialize};

/// Camera path. World up is `+z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// `n_frames` poses evenly spaced in azimuth on a circle of `radius`
    /// around `center`, raised by `height`, all looking at `look_at`.
    Orbit {
        center: [f64; 3],
        radius: f64,
        height: f64,
        n_frames: usize,
        look_at: [f64; 3],
        #[serde(default)]
        start_angle: f64,
        /// Azimuth covered, radians; a full circle by default.
        #[serde(default = "full_turn")]
        sweep: f64,
    },
    /// Positions bilinearly interpolated between four corners
    /// (`[top-left, top-right, bottom-left, bottom-right]`), rows first.
    Raster {
        corners: [[f64; 3]; 4],
        rows: usize,
        cols: usize,
        look_at: [f64; 3],
    },
}

fn full_turn() -> f64 {
    std::f64::consts::TAU
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl TrajectorySpec {
    pub fn len(&self) -> usize {
        match self {
            TrajectorySpec::Orbit { n_frames, .. } => *n_frames,
            TrajectorySpec::Raster { rows, cols, .. } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn poses(&self) -> Result<Vec<Pose>, CoreError> {
        if self.is_empty() {
            return Err(CoreError::InvalidPose("trajectory needs at least one frame".into()));
        }
        let up = Vector3::z();
        match self {
            TrajectorySpec::Orbit { center, radius, height, n_frames, look_at, start_angle, sweep } => {
                // a full turn must not repeat the first pose
                let closed = (sweep.abs() - std::f64::consts::TAU).abs() < 1e-12;
                let denom = if closed || *n_frames == 1 { *n_frames } else { n_frames - 1 } as f64;
                (0..*n_frames)
                    .map(|i| {
                        let phi = start_angle + sweep * i as f64 / denom;
                        let eye = v3(*center) + Vector3::new(radius * phi.cos(), radius * phi.sin(), *height);
                        Pose::look_at(eye, v3(*look_at), up)
                    })
                    .collect()
            }
            TrajectorySpec::Raster { corners, rows, cols, look_at } => {
                let [tl, tr, bl, br] = corners.map(v3);
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..*rows {
                    let v = if *rows > 1 { r as f64 / (rows - 1) as f64 } else { 0.0 };
                    for c in 0..*cols {
                        let u = if *cols > 1 { c as f64 / (cols - 1) as f64 } else { 0.0 };
                        let top = tl + (tr - tl) * u;
                        let bottom = bl + (br - bl) * u;
                        out.push(Pose::look_at(top + (bottom - top) * v, v3(*look_at), up)?);
                    }
                }
                Ok(out)
            }
        }
    }
}
