use rfnode_core::FrameSample;

use crate::buffer::{KeyframeBuffer, KeyframeEntry};
use crate::error::IngestError;
use crate::filters::{blur_score, pose_novelty, FilterPolicy};
use crate::rectify::rectify_frame;
use crate::registry::SensorRegistry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Admission {
    Admitted(usize),
    RejectedBlur,
    RejectedNovelty,
    RejectedFull,
}

impl Admission {
    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admitted(_))
    }
}

/// Registry bookkeeping, depth check and rectification shared by the
/// filtered and the scripted admission paths.
pub(crate) fn prepare(
    buffer: &KeyframeBuffer,
    registry: &mut SensorRegistry,
    frame: &FrameSample,
) -> Result<FrameSample, IngestError> {
    frame.validate()?;
    registry.observe(&frame.camera_id, &frame.camera, frame.timestamp)?;
    if buffer.depth_enabled() && frame.depth.is_none() {
        return Err(IngestError::MissingDepth {
            camera: frame.camera_id.clone(),
            seq: frame.seq,
        });
    }
    Ok(rectify_frame(frame))
}

/// Resizes to canonical resolution and stores. `None` when full.
pub(crate) fn store(
    buffer: &mut KeyframeBuffer,
    registry: &mut SensorRegistry,
    frame: FrameSample,
    blur: f64,
    novelty: f64,
) -> Result<Option<usize>, IngestError> {
    if buffer.is_full() {
        return Ok(None);
    }
    let (cw, ch) = buffer.canonical_size();
    let camera = frame.camera.resized(cw, ch)?;
    let (w, h) = (cw as usize, ch as usize);
    let rgb = frame.rgb.resize_bilinear(w, h);
    // keep depth only when every camera supplies it, so entries stay uniform
    let depth = if buffer.depth_enabled() {
        frame.depth.map(|d| if d.dims() == (w, h) { d } else { d.resize_nearest(w, h) })
    } else {
        None
    };
    let pose = frame.pose;
    let index = buffer.push(KeyframeEntry {
        camera_id: frame.camera_id.clone(),
        seq: frame.seq,
        timestamp: frame.timestamp,
        rgb,
        depth,
        camera,
        pose,
        blur_score: blur,
        novelty,
    });
    if index.is_some() {
        if let Some(state) = registry.get_mut(&frame.camera_id) {
            state.last_admitted_pose = Some(pose);
        }
    }
    Ok(index)
}

/// Runs the blur, novelty and capacity checks in that order and stores the
/// frame if all pass.
pub fn admit_frame(
    buffer: &mut KeyframeBuffer,
    registry: &mut SensorRegistry,
    frame: &FrameSample,
    policy: &FilterPolicy,
) -> Result<Admission, IngestError> {
    let frame = prepare(buffer, registry, frame)?;
    let blur = blur_score(&frame.rgb);
    if blur < policy.blur_threshold {
        return Ok(Admission::RejectedBlur);
    }
    let novelty = pose_novelty(&frame.pose, buffer.poses(), policy.rotation_weight);
    if novelty < policy.novelty_threshold {
        return Ok(Admission::RejectedNovelty);
    }
    Ok(match store(buffer, registry, frame, blur, novelty)? {
        Some(i) => Admission::Admitted(i),
        None => Admission::RejectedFull,
    })
}

pub fn online_mode_ready(buffer: &KeyframeBuffer, policy: &FilterPolicy) -> bool {
    buffer.len() >= policy.initial_batch_size
}
