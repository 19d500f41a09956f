//! `rfnode.toml`: every tunable, grouped by owning module. Missing keys
//! take the module defaults; unknown keys are rejected.

use anyhow::{bail, Context, Result};
use rfnode_eval::{EvalConfig, ModelConfig};
use rfnode_ingest::FilterPolicy;
use rfnode_service::ServiceConfig;
use rfnode_splat::SplatConfig;
use rfnode_tsdf::{MeshRenderConfig, TsdfConfig};
use rfnode_voxel::VoxelConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds initialization and batch sampling.
    pub seed: u64,
    pub ingest: IngestSection,
    pub render: RenderSection,
    pub voxel: VoxelSection,
    pub splat: SplatSection,
    pub mesh: MeshSection,
    pub service: ServiceSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub blur_threshold: f64,
    pub novelty_threshold: f64,
    pub rotation_weight: f64,
    pub initial_batch_size: usize,
    pub buffer_capacity: usize,
}

/// Clip planes and background shared by all three backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoxelSection {
    pub learning_rate: f64,
    pub rays_per_batch: usize,
    pub samples_per_ray: usize,
    pub depth_loss_weight: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub cells: usize,
    pub margin: f64,
    pub init_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplatSection {
    pub lr_means: f64,
    pub lr_scales: f64,
    pub lr_rotations: f64,
    pub lr_opacity: f64,
    pub lr_colors: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub prune_opacity_threshold: f64,
    pub prune_interval: u64,
    pub transmittance_floor: f64,
    pub tile_size: usize,
    pub low_pass: f64,
    pub alpha_min: f64,
    pub init_count: usize,
    pub extend_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub voxel_size: f64,
    /// Defaults to four voxels when absent.
    pub truncation: Option<f64>,
    pub max_weight: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub slice_pixel_budget: usize,
    pub queue_pixel_cap: usize,
    pub continuous_step_interval: u64,
    pub continuous_pose_threshold: f64,
    pub rotation_weight: f64,
    pub max_payload: usize,
    pub idle_wait_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iterations: u64,
    pub eval_every: u64,
    pub sweep_reps: usize,
    pub sweep_fractions: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: ModelConfig::default().seed,
            ingest: IngestSection::default(),
            render: RenderSection::default(),
            voxel: VoxelSection::default(),
            splat: SplatSection::default(),
            mesh: MeshSection::default(),
            service: ServiceSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for IngestSection {
    fn default() -> Self {
        let p = FilterPolicy::default();
        Self {
            blur_threshold: p.blur_threshold,
            novelty_threshold: p.novelty_threshold,
            rotation_weight: p.rotation_weight,
            initial_batch_size: p.initial_batch_size,
            buffer_capacity: 256,
        }
    }
}

impl Default for RenderSection {
    fn default() -> Self {
        let v = VoxelConfig::default();
        Self { near: v.near, far: v.far, background: v.background }
    }
}

impl Default for VoxelSection {
    fn default() -> Self {
        let v = VoxelConfig::default();
        let m = ModelConfig::default();
        Self {
            learning_rate: v.step_size,
            rays_per_batch: v.rays_per_batch,
            samples_per_ray: v.samples_per_ray,
            depth_loss_weight: v.depth_loss_weight,
            beta1: v.beta1,
            beta2: v.beta2,
            eps: v.eps,
            cells: m.voxel_cells,
            margin: m.voxel_margin,
            init_density: m.voxel_init_density,
        }
    }
}

impl Default for SplatSection {
    fn default() -> Self {
        let s = SplatConfig::default();
        let m = ModelConfig::default();
        Self {
            lr_means: s.lr_means,
            lr_scales: s.lr_scales,
            lr_rotations: s.lr_rotations,
            lr_opacity: s.lr_opacity,
            lr_colors: s.lr_colors,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.eps,
            prune_opacity_threshold: s.prune_opacity_threshold,
            prune_interval: s.prune_interval,
            transmittance_floor: s.transmittance_floor,
            tile_size: s.tile_size,
            low_pass: s.low_pass,
            alpha_min: s.alpha_min,
            init_count: m.splat_init_count,
            extend_count: m.splat_extend_count,
        }
    }
}

impl Default for MeshSection {
    fn default() -> Self {
        let t = TsdfConfig::default();
        Self { voxel_size: t.voxel_size, truncation: t.truncation, max_weight: t.max_weight }
    }
}

impl Default for ServiceSection {
    fn default() -> Self {
        let s = ServiceConfig::default();
        Self {
            slice_pixel_budget: s.slice_pixel_budget,
            queue_pixel_cap: s.queue_pixel_cap,
            continuous_step_interval: s.continuous_step_interval,
            continuous_pose_threshold: s.continuous_pose_threshold,
            rotation_weight: s.rotation_weight,
            max_payload: s.max_payload,
            idle_wait_ms: s.idle_wait_ms,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        Self {
            iterations: e.iterations,
            eval_every: e.eval_every,
            sweep_reps: e.sweep_reps,
            sweep_fractions: e.sweep_fractions,
        }
    }
}

/// Sets `section.key = value` in a TOML tree; `value` is parsed as TOML
/// and falls back to a bare string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override {assignment:?} is not key=value"))?;
    let value: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override {assignment:?} has an empty key");
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        table = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("override {assignment:?}: {k} is not a table"))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    /// Parses TOML text, then applies `key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: toml::Table = text.parse().context("config is not valid TOML")?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let config: Config = toml::Value::Table(root).try_into().context("invalid config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate().map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        self.service_config().validate().map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        if self.ingest.buffer_capacity == 0 {
            bail!("invalid config: ingest.buffer_capacity must be positive");
        }
        self.eval_config().validate().map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        Ok(())
    }

    pub fn filter_policy(&self) -> FilterPolicy {
        FilterPolicy {
            blur_threshold: self.ingest.blur_threshold,
            novelty_threshold: self.ingest.novelty_threshold,
            rotation_weight: self.ingest.rotation_weight,
            initial_batch_size: self.ingest.initial_batch_size,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let r = &self.render;
        let v = &self.voxel;
        let s = &self.splat;
        ModelConfig {
            voxel: VoxelConfig {
                step_size: v.learning_rate,
                rays_per_batch: v.rays_per_batch,
                samples_per_ray: v.samples_per_ray,
                near: r.near,
                far: r.far,
                depth_loss_weight: v.depth_loss_weight,
                background: r.background,
                beta1: v.beta1,
                beta2: v.beta2,
                eps: v.eps,
            },
            voxel_cells: v.cells,
            voxel_margin: v.margin,
            voxel_init_density: v.init_density,
            splat: SplatConfig {
                lr_means: s.lr_means,
                lr_scales: s.lr_scales,
                lr_rotations: s.lr_rotations,
                lr_opacity: s.lr_opacity,
                lr_colors: s.lr_colors,
                beta1: s.beta1,
                beta2: s.beta2,
                eps: s.eps,
                prune_opacity_threshold: s.prune_opacity_threshold,
                prune_interval: s.prune_interval,
                transmittance_floor: s.transmittance_floor,
                tile_size: s.tile_size,
                low_pass: s.low_pass,
                alpha_min: s.alpha_min,
                near: r.near,
                far: r.far,
                background: r.background,
            },
            splat_init_count: s.init_count,
            splat_extend_count: s.extend_count,
            tsdf: TsdfConfig {
                voxel_size: self.mesh.voxel_size,
                truncation: self.mesh.truncation,
                max_weight: self.mesh.max_weight,
            },
            mesh: MeshRenderConfig { near: r.near, far: r.far, background: r.background },
            seed: self.seed,
        }
    }

    pub fn service_config(&self) -> ServiceConfig {
        let s = &self.service;
        ServiceConfig {
            slice_pixel_budget: s.slice_pixel_budget,
            queue_pixel_cap: s.queue_pixel_cap,
            continuous_step_interval: s.continuous_step_interval,
            continuous_pose_threshold: s.continuous_pose_threshold,
            rotation_weight: s.rotation_weight,
            max_payload: s.max_payload,
            idle_wait_ms: s.idle_wait_ms,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            iterations: self.eval.iterations,
            eval_every: self.eval.eval_every,
            sweep_reps: self.eval.sweep_reps,
            sweep_fractions: self.eval.sweep_fractions.clone(),
            model: self.model_config(),
            ..EvalConfig::default()
        }
    }
}
