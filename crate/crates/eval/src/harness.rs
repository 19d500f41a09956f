use std::path::Path;
use std::time::Instant;

use rfnode_core::{FrameSample, SceneRenderer};
use rfnode_ingest::session::Session;
use rfnode_ingest::{rectify_frame, replay_admit, KeyframeBuffer, ReplayScript};

use crate::error::EvalError;
use crate::metrics::{psnr, ssim};
use crate::model::{sha256_hex, Method, Model, ModelConfig};
use crate::report::ReportRow;
use crate::sweep::{render_sweep, SweepRow, DEFAULT_FRACTIONS};

/// Training keyframes admitted by a replay script plus rectified holdout views.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub dataset: String,
    pub buffer: KeyframeBuffer,
    pub holdout: Vec<FrameSample>,
}

pub fn load_eval_data(
    session_dir: &Path,
    script: &ReplayScript,
    holdout: &ReplayScript,
    capacity: usize,
) -> Result<EvalData, EvalError> {
    let session = Session::open(session_dir)?;
    let mut registry = session.manifest().registry()?;
    let mut buffer = KeyframeBuffer::new(capacity, &registry)?;
    let mut views = Vec::new();
    for frame in session.frames() {
        let frame = frame?;
        if holdout.contains(&frame.camera_id, frame.seq) {
            views.push(rectify_frame(&frame));
        }
        replay_admit(&mut buffer, &mut registry, &frame, script)?;
    }
    if buffer.is_empty() {
        return Err(EvalError::NoKeyframes);
    }
    if views.is_empty() {
        return Err(EvalError::NoHoldout);
    }
    let dataset = session_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| session_dir.display().to_string());
    Ok(EvalData { dataset, buffer, holdout: views })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    None,
    Psnr(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Optimizer steps for the radiance fields; the mesh integrates every keyframe.
    pub iterations: u64,
    /// Holdout evaluation cadence while a target is pending.
    pub eval_every: u64,
    pub target: Target,
    /// Stop training as soon as the target is reached.
    pub stop_at_target: bool,
    pub sweep_fractions: Vec<f64>,
    pub sweep_reps: usize,
    pub model: ModelConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            eval_every: 25,
            target: Target::None,
            stop_at_target: false,
            sweep_fractions: DEFAULT_FRACTIONS.to_vec(),
            sweep_reps: 10,
            model: ModelConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.model.validate()?;
        if self.eval_every == 0 {
            return Err(EvalError::Config("eval_every must be positive".into()));
        }
        if self.sweep_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(EvalError::Config("sweep fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: u64,
    /// Training seconds so far, evaluation excluded.
    pub train_seconds: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeToQuality {
    pub iteration: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub psnr: f64,
    pub ssim: f64,
    pub iterations: u64,
    pub train_seconds: f64,
    /// `None` when the target was never reached (or none was set).
    pub time_to_quality: Option<TimeToQuality>,
    pub curve: Vec<CurvePoint>,
    pub sweep: Vec<SweepRow>,
    pub checkpoint_sha256: String,
    pub checkpoint: Vec<u8>,
}

impl MethodResult {
    pub fn iter_ms(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            1000.0 * self.train_seconds / self.iterations as f64
        }
    }

    pub fn report_row(&self, dataset: &str) -> ReportRow {
        ReportRow {
            method: self.method.name().to_string(),
            dataset: dataset.to_string(),
            psnr_db: self.psnr,
            ssim: self.ssim,
            iter_ms: Some(self.iter_ms()),
            tts_s: self.time_to_quality.map(|t| t.seconds),
            render_ms: self.sweep.iter().map(|r| (r.fraction, r.mean_ms)).collect(),
        }
    }
}

/// Mean PSNR and SSIM of `renderer` over the holdout views.
pub fn holdout_scores(renderer: &dyn SceneRenderer, views: &[FrameSample]) -> Result<(f64, f64), EvalError> {
    if views.is_empty() {
        return Err(EvalError::NoHoldout);
    }
    let (mut p, mut s) = (0.0, 0.0);
    for v in views {
        let out = renderer.render(&v.camera, &v.pose, None)?;
        p += psnr(&out.rgb, &v.rgb)?;
        s += ssim(&out.rgb, &v.rgb)?;
    }
    let n = views.len() as f64;
    Ok((p / n, s / n))
}

pub fn holdout_psnr(renderer: &dyn SceneRenderer, views: &[FrameSample]) -> Result<f64, EvalError> {
    let mut p = 0.0;
    for v in views {
        let out = renderer.render(&v.camera, &v.pose, None)?;
        p += psnr(&out.rgb, &v.rgb)?;
    }
    Ok(p / views.len().max(1) as f64)
}

struct Tracker {
    target: Target,
    curve: Vec<CurvePoint>,
    reached: Option<TimeToQuality>,
}

impl Tracker {
    /// Scores the holdout while the target is pending; true on first reach.
    fn check(&mut self, model: &mut Model, views: &[FrameSample], train_seconds: f64) -> Result<bool, EvalError> {
        let Target::Psnr(target) = self.target else { return Ok(false) };
        if self.reached.is_some() {
            return Ok(false);
        }
        let psnr = holdout_psnr(model.renderer().as_ref(), views)?;
        let iteration = model.steps();
        self.curve.push(CurvePoint { iteration, train_seconds, psnr });
        if psnr >= target {
            self.reached = Some(TimeToQuality { iteration, seconds: train_seconds });
            return Ok(true);
        }
        Ok(false)
    }
}

/// Trains one method on a copy of the data's buffer and scores it.
pub fn evaluate_method(method: Method, data: &EvalData, config: &EvalConfig) -> Result<MethodResult, EvalError> {
    config.validate()?;
    if data.holdout.is_empty() {
        return Err(EvalError::NoHoldout);
    }
    let mut buffer = data.buffer.clone();
    let mut model = Model::new(method, &buffer, &config.model)?;
    let mut tracker = Tracker { target: config.target, curve: Vec::new(), reached: None };
    let mut train_seconds = 0.0;

    let hit = tracker.check(&mut model, &data.holdout, 0.0)?;
    if !(hit && config.stop_at_target) {
        loop {
            if method.is_radiance_field() && model.steps() >= config.iterations {
                break;
            }
            let start = Instant::now();
            let stepped = model.step(&mut buffer)?;
            train_seconds += start.elapsed().as_secs_f64();
            if stepped.is_none() {
                break;
            }
            let due = model.steps() % config.eval_every == 0 || !model.has_work(&buffer);
            if due && tracker.check(&mut model, &data.holdout, train_seconds)? && config.stop_at_target {
                break;
            }
        }
        if tracker.curve.last().map(|c| c.iteration) != Some(model.steps()) {
            tracker.check(&mut model, &data.holdout, train_seconds)?;
        }
    }
    let Tracker { curve, reached, .. } = tracker;

    let renderer = model.renderer();
    let (psnr, ssim) = holdout_scores(renderer.as_ref(), &data.holdout)?;
    let view = &data.holdout[0];
    let sweep = render_sweep(renderer.as_ref(), &view.camera, &view.pose, &config.sweep_fractions, config.sweep_reps)?;
    let checkpoint = model.checkpoint();
    Ok(MethodResult {
        method,
        psnr,
        ssim,
        iterations: model.steps(),
        train_seconds,
        time_to_quality: reached,
        curve,
        sweep,
        checkpoint_sha256: sha256_hex(&checkpoint),
        checkpoint,
    })
}

/// Evaluates each method. With `target_from_mesh` and no explicit target,
/// the mesh baseline runs first and its final PSNR becomes the
/// time-to-quality target for the others.
pub fn evaluate(
    methods: &[Method],
    data: &EvalData,
    config: &EvalConfig,
    target_from_mesh: bool,
) -> Result<Vec<MethodResult>, EvalError> {
    let mut order: Vec<Method> = methods.to_vec();
    let mut cfg = config.clone();
    let mut results = Vec::with_capacity(order.len());
    if target_from_mesh && cfg.target == Target::None && order.contains(&Method::Mesh) {
        order.retain(|m| *m != Method::Mesh);
        let mut mesh = evaluate_method(Method::Mesh, data, &cfg)?;
        mesh.time_to_quality = Some(TimeToQuality { iteration: mesh.iterations, seconds: mesh.train_seconds });
        cfg.target = Target::Psnr(mesh.psnr);
        results.push(mesh);
    }
    for m in order {
        results.push(evaluate_method(m, data, &cfg)?);
    }
    results.sort_by_key(|r| methods.iter().position(|m| *m == r.method));
    Ok(results)
}
