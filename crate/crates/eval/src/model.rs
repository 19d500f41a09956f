use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rfnode_core::{FrameSample, SceneRenderer, TrainStats};
use rfnode_ingest::{sample_batch, KeyframeBuffer, KeyframeEntry};
use rfnode_splat::{extend_from_entry, init_from_rgbd, SplatConfig, SplatRenderer, SplatTrainer};
use rfnode_tsdf::{extract_mesh, MeshRenderConfig, MeshRenderer, TriangleMesh, TsdfConfig, TsdfGrid};
use rfnode_voxel::{scene_bounds, VoxelConfig, VoxelGrid, VoxelRenderer, VoxelTrainer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Voxel,
    Splat,
    Mesh,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Voxel, Method::Splat, Method::Mesh];

    pub fn name(self) -> &'static str {
        match self {
            Method::Voxel => "voxel",
            Method::Splat => "splat",
            Method::Mesh => "mesh",
        }
    }

    /// Whether training steps run optimization (the mesh baseline integrates).
    pub fn is_radiance_field(self) -> bool {
        self != Method::Mesh
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected voxel, splat or mesh)"))
    }
}

/// Tunables for the three trainable scene models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub voxel: VoxelConfig,
    /// Cells along the longest axis of the scene bounds.
    pub voxel_cells: usize,
    /// Fraction of the largest extent added around the depth bounds.
    pub voxel_margin: f64,
    /// Initial raw density (pre-softplus).
    pub voxel_init_density: f64,
    pub splat: SplatConfig,
    pub splat_init_count: usize,
    /// Gaussians seeded per keyframe admitted after initialization.
    pub splat_extend_count: usize,
    pub tsdf: TsdfConfig,
    pub mesh: MeshRenderConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            voxel: VoxelConfig::default(),
            voxel_cells: 96,
            voxel_margin: 0.05,
            voxel_init_density: -3.0,
            splat: SplatConfig::default(),
            splat_init_count: 60_000,
            splat_extend_count: 2_000,
            tsdf: TsdfConfig::default(),
            mesh: MeshRenderConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.voxel.validate()?;
        self.splat.validate()?;
        self.tsdf.validate()?;
        if self.voxel_cells < 2 {
            return Err(EvalError::Config("voxel_cells must be at least 2".into()));
        }
        if !(self.voxel_margin.is_finite() && self.voxel_margin >= 0.0) {
            return Err(EvalError::Config("voxel_margin must be finite and non-negative".into()));
        }
        if !self.voxel_init_density.is_finite() {
            return Err(EvalError::Config("voxel_init_density must be finite".into()));
        }
        if self.splat_init_count == 0 {
            return Err(EvalError::Config("splat_init_count must be positive".into()));
        }
        Ok(())
    }
}

fn step_seed(seed: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step)
}

fn entry_frame(e: &KeyframeEntry) -> FrameSample {
    FrameSample {
        camera_id: e.camera_id.clone(),
        seq: e.seq,
        timestamp: e.timestamp,
        rgb: e.rgb.clone(),
        depth: e.depth.clone(),
        pose: e.pose,
        camera: e.camera,
    }
}

struct MeshState {
    grid: TsdfGrid,
    integrated: usize,
    mesh: Option<Arc<TriangleMesh>>,
}

impl MeshState {
    fn mesh(&mut self) -> Arc<TriangleMesh> {
        self.mesh.get_or_insert_with(|| Arc::new(extract_mesh(&self.grid))).clone()
    }
}

enum Inner {
    Voxel(VoxelTrainer),
    Splat { trainer: SplatTrainer, seen: usize },
    Mesh(MeshState),
}

/// One scene model trained from a keyframe buffer.
///
/// For the mesh baseline a step integrates the next unintegrated keyframe
/// and returns `None` once all are fused.
pub struct Model {
    config: ModelConfig,
    inner: Inner,
    snapshot: Option<(u64, Arc<dyn SceneRenderer>)>,
}

impl Model {
    pub fn new(method: Method, buffer: &KeyframeBuffer, config: &ModelConfig) -> Result<Self, EvalError> {
        config.validate()?;
        if buffer.is_empty() {
            return Err(EvalError::NoKeyframes);
        }
        let inner = match method {
            Method::Voxel => {
                let bounds = scene_bounds(buffer.entries(), config.voxel_margin)
                    .ok_or(EvalError::NeedsDepth { method: "voxel" })?;
                let ext = bounds.extent();
                let cell = ext.max() / config.voxel_cells as f64;
                let res = [0, 1, 2].map(|k| ((ext[k] / cell).ceil() as usize).max(2));
                let grid = VoxelGrid::new(res, bounds, config.voxel_init_density)?;
                Inner::Voxel(VoxelTrainer::new(grid, config.voxel)?)
            }
            Method::Splat => {
                if !buffer.depth_enabled() {
                    return Err(EvalError::NeedsDepth { method: "splat" });
                }
                let set = init_from_rgbd(buffer.entries(), config.splat_init_count, config.seed)?;
                Inner::Splat { trainer: SplatTrainer::new(set, config.splat)?, seen: buffer.len() }
            }
            Method::Mesh => {
                if !buffer.depth_enabled() {
                    return Err(EvalError::NeedsDepth { method: "mesh" });
                }
                Inner::Mesh(MeshState { grid: TsdfGrid::new(config.tsdf)?, integrated: 0, mesh: None })
            }
        };
        Ok(Self { config: *config, inner, snapshot: None })
    }

    pub fn method(&self) -> Method {
        match self.inner {
            Inner::Voxel(_) => Method::Voxel,
            Inner::Splat { .. } => Method::Splat,
            Inner::Mesh(_) => Method::Mesh,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Optimizer steps taken, or frames integrated for the mesh.
    pub fn steps(&self) -> u64 {
        match &self.inner {
            Inner::Voxel(t) => t.steps(),
            Inner::Splat { trainer, .. } => trainer.steps(),
            Inner::Mesh(m) => m.integrated as u64,
        }
    }

    /// Gaussians, cells, or mesh triangles (extracting if needed).
    pub fn size(&mut self) -> usize {
        match &mut self.inner {
            Inner::Voxel(t) => t.grid().cell_count(),
            Inner::Splat { trainer, .. } => trainer.splats().len(),
            Inner::Mesh(m) => m.mesh().triangles.len(),
        }
    }

    /// Whether a step would do work right now.
    pub fn has_work(&self, buffer: &KeyframeBuffer) -> bool {
        match &self.inner {
            Inner::Mesh(m) => m.integrated < buffer.len(),
            _ => !buffer.is_empty(),
        }
    }

    pub fn step(&mut self, buffer: &mut KeyframeBuffer) -> Result<Option<TrainStats>, EvalError> {
        let seed = step_seed(self.config.seed, self.steps());
        let stats = match &mut self.inner {
            Inner::Voxel(t) => {
                let batch = sample_batch(buffer, self.config.voxel.rays_per_batch, seed)?;
                Some(t.train_step(&batch)?)
            }
            Inner::Splat { trainer, seen } => {
                while *seen < buffer.len() {
                    let entry = &buffer.entries()[*seen];
                    let extra = extend_from_entry(
                        trainer.splats(),
                        entry,
                        self.config.splat_extend_count,
                        step_seed(self.config.seed, *seen as u64),
                        &self.config.splat,
                    )?;
                    trainer.extend(&extra);
                    *seen += 1;
                }
                let i = buffer.select_view(seed)?;
                Some(trainer.train_step(&buffer.entries()[i])?)
            }
            Inner::Mesh(m) => {
                if m.integrated >= buffer.len() {
                    return Ok(None);
                }
                let start = Instant::now();
                m.grid.integrate_frame(&entry_frame(&buffer.entries()[m.integrated]))?;
                m.integrated += 1;
                m.mesh = None;
                Some(TrainStats { step_time: start.elapsed().as_secs_f64(), ..Default::default() })
            }
        };
        Ok(stats)
    }

    /// Read-only snapshot of the current state, cached until the next step.
    pub fn renderer(&mut self) -> Arc<dyn SceneRenderer> {
        let steps = self.steps();
        if let Some((at, r)) = &self.snapshot {
            if *at == steps {
                return r.clone();
            }
        }
        let r: Arc<dyn SceneRenderer> = match &mut self.inner {
            Inner::Voxel(t) => Arc::new(VoxelRenderer { grid: Arc::new(t.grid().clone()), config: self.config.voxel }),
            Inner::Splat { trainer, .. } => {
                Arc::new(SplatRenderer::new(Arc::new(trainer.splats().clone()), self.config.splat))
            }
            Inner::Mesh(m) => Arc::new(MeshRenderer::new(m.mesh(), self.config.mesh)),
        };
        self.snapshot = Some((steps, r.clone()));
        r
    }

    /// `voxel.ckpt`, `splat.ckpt`, or a binary PLY for the mesh.
    pub fn checkpoint(&mut self) -> Vec<u8> {
        match &mut self.inner {
            Inner::Voxel(t) => rfnode_voxel::encode_checkpoint(t.grid()),
            Inner::Splat { trainer, .. } => rfnode_splat::encode_checkpoint(trainer.splats()),
            Inner::Mesh(m) => {
                let mut out = Vec::new();
                rfnode_tsdf::export_ply(&m.mesh(), &mut out).expect("writing to a Vec cannot fail");
                out
            }
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifies a checkpoint by its leading bytes.
pub fn checkpoint_method(bytes: &[u8]) -> Option<Method> {
    if bytes.starts_with(rfnode_voxel::CKPT_MAGIC) {
        Some(Method::Voxel)
    } else if bytes.starts_with(rfnode_splat::CKPT_MAGIC) {
        Some(Method::Splat)
    } else if bytes.starts_with(b"ply\n") {
        Some(Method::Mesh)
    } else {
        None
    }
}

/// Renderer for a saved checkpoint of any method.
pub fn load_checkpoint(bytes: &[u8], config: &ModelConfig) -> Result<(Method, Arc<dyn SceneRenderer>), EvalError> {
    let method = checkpoint_method(bytes).ok_or_else(|| EvalError::Config("unrecognized checkpoint format".into()))?;
    let r: Arc<dyn SceneRenderer> = match method {
        Method::Voxel => {
            Arc::new(VoxelRenderer { grid: Arc::new(rfnode_voxel::decode_checkpoint(bytes)?), config: config.voxel })
        }
        Method::Splat => Arc::new(SplatRenderer::new(Arc::new(rfnode_splat::decode_checkpoint(bytes)?), config.splat)),
        Method::Mesh => Arc::new(MeshRenderer::new(Arc::new(rfnode_tsdf::import_ply(bytes)?), config.mesh)),
    };
    Ok((method, r))
}
