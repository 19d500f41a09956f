use std::time::Instant;

use rfnode_core::{scale_camera, PinholeCamera, Pose, SceneRenderer};
use serde::{Deserialize, Serialize};

use crate::error::EvalError;

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub width: u32,
    pub height: u32,
    pub mean_ms: f64,
    /// Population standard deviation over the repetitions.
    pub std_ms: f64,
}

/// Wall-clock render time per resolution fraction: one untimed warm-up
/// render, then `reps` timed renders.
pub fn render_sweep(
    renderer: &dyn SceneRenderer,
    camera: &PinholeCamera,
    pose: &Pose,
    fractions: &[f64],
    reps: usize,
) -> Result<Vec<SweepRow>, EvalError> {
    let reps = reps.max(1);
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let cam = scale_camera(camera, fraction).map_err(|e| EvalError::Config(e.to_string()))?;
        renderer.render(&cam, pose, None)?;
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let start = Instant::now();
            renderer.render(&cam, pose, None)?;
            times.push(start.elapsed().as_secs_f64() * 1000.0);
        }
        let mean = times.iter().sum::<f64>() / reps as f64;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / reps as f64;
        rows.push(SweepRow { fraction, width: cam.width(), height: cam.height(), mean_ms: mean, std_ms: var.sqrt() });
    }
    Ok(rows)
}

/// `ms(fraction 1.0) / ms(fraction 0.1)`, when both rows are present.
pub fn full_to_tenth_ratio(rows: &[SweepRow]) -> Option<f64> {
    let at = |f: f64| rows.iter().find(|r| (r.fraction - f).abs() < 1e-12).map(|r| r.mean_ms);
    Some(at(1.0)? / at(0.1)?)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("fraction,width,height,mean_ms,std_ms\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:.4},{:.4}\n", r.fraction, r.width, r.height, r.mean_ms, r.std_ms));
    }
    out
}
