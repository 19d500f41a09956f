use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfnode_core::{CoreError, PinholeCamera};
use rfnode_ingest::session::{CameraRecord, Manifest, SessionWriter, DEFAULT_DEPTH_SCALE, MANIFEST_FILE};
use rfnode_ingest::IngestError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scene::{trace_sample, SceneSpec};
use crate::trajectory::TrajectorySpec;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Contents of a `gen --scene` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub camera: CameraSpec,
    #[serde(default = "default_camera_id")]
    pub camera_id: String,
    /// Seconds between consecutive timestamps.
    #[serde(default = "default_interval")]
    pub frame_interval: f64,
    /// Half-width of uniform depth noise, meters. Off by default.
    #[serde(default)]
    pub depth_noise_m: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_camera_id() -> String {
    "cam0".into()
}

fn default_interval() -> f64 {
    0.1
}

impl GenerateSpec {
    pub fn parse(json: &str) -> Result<Self, SynthError> {
        let spec: GenerateSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.scene.validate().map_err(SynthError::Scene)?;
        self.pinhole()?;
        if self.trajectory.is_empty() {
            return Err(SynthError::Scene("trajectory has no frames".into()));
        }
        if self.trajectory.len() > 100_000 {
            return Err(SynthError::Scene("trajectory too long".into()));
        }
        if !(self.frame_interval.is_finite() && self.frame_interval >= 0.0) {
            return Err(SynthError::Scene("frame_interval must be finite and non-negative".into()));
        }
        if !(self.depth_noise_m.is_finite() && self.depth_noise_m >= 0.0) {
            return Err(SynthError::Scene("depth_noise_m must be finite and non-negative".into()));
        }
        if self.camera_id.is_empty() || self.camera_id.contains(['/', '\\', ',']) {
            return Err(SynthError::Scene("camera_id must be a non-empty plain name".into()));
        }
        self.trajectory.poses()?;
        Ok(())
    }

    pub fn pinhole(&self) -> Result<PinholeCamera, SynthError> {
        let c = self.camera;
        Ok(PinholeCamera::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?)
    }
}

/// Renders every trajectory pose into `out_dir` with seqs `0..n`.
pub fn generate_session(spec: &GenerateSpec, out_dir: &Path) -> Result<Manifest, SynthError> {
    spec.validate()?;
    let camera = spec.pinhole()?;
    let record = CameraRecord::from_camera(spec.camera_id.clone(), &camera, true);
    let mut writer = SessionWriter::create(out_dir, vec![record], DEFAULT_DEPTH_SCALE)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (i, pose) in spec.trajectory.poses()?.iter().enumerate() {
        let mut frame = trace_sample(&spec.scene, &spec.camera_id, i as u64, i as f64 * spec.frame_interval, &camera, pose);
        if spec.depth_noise_m > 0.0 {
            if let Some(d) = frame.depth.as_mut() {
                for v in d.pixels_mut().iter_mut().filter(|v| **v > 0.0) {
                    *v = (*v + rng.gen_range(-spec.depth_noise_m..=spec.depth_noise_m) as f32).max(0.0);
                }
            }
        }
        writer.write_frame(&frame)?;
    }
    Ok(writer.finish()?)
}

/// SHA-256 over the manifest bytes followed by every referenced image in
/// manifest order.
pub fn session_checksum(dir: &Path) -> Result<String, SynthError> {
    let manifest_bytes = fs::read(dir.join(MANIFEST_FILE))?;
    let manifest = Manifest::parse(std::str::from_utf8(&manifest_bytes).map_err(|e| SynthError::Scene(e.to_string()))?)?;
    let mut h = Sha256::new();
    h.update(&manifest_bytes);
    for f in &manifest.frames {
        h.update(fs::read(dir.join(&f.rgb))?);
        if let Some(d) = &f.depth {
            h.update(fs::read(dir.join(d))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}
