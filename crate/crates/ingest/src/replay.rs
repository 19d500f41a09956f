use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rfnode_core::FrameSample;

use crate::admit::{prepare, store};
use crate::buffer::KeyframeBuffer;
use crate::error::IngestError;
use crate::filters::{blur_score, pose_novelty};
use crate::registry::SensorRegistry;

/// Ordered `(camera_id, seq)` pairs to admit, bypassing the filters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayScript {
    pairs: Vec<(String, u64)>,
    index: HashSet<(String, u64)>,
}

impl ReplayScript {
    pub fn new(pairs: impl IntoIterator<Item = (String, u64)>) -> Result<Self, IngestError> {
        let mut script = Self::default();
        for (line, (cam, seq)) in pairs.into_iter().enumerate() {
            script.push(line + 1, cam, seq)?;
        }
        Ok(script)
    }

    fn push(&mut self, line: usize, cam: String, seq: u64) -> Result<(), IngestError> {
        if !self.index.insert((cam.clone(), seq)) {
            return Err(IngestError::Script {
                line,
                reason: format!("duplicate pair ({cam}, {seq})"),
            });
        }
        self.pairs.push((cam, seq));
        Ok(())
    }

    pub fn pairs(&self) -> &[(String, u64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, camera_id: &str, seq: u64) -> bool {
        self.index.contains(&(camera_id.to_string(), seq))
    }
}

/// One `cam_id,seq` per line. Blank lines are ignored.
impl FromStr for ReplayScript {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut script = Self::default();
        for (i, raw) in s.lines().enumerate() {
            let line = i + 1;
            let text = raw.trim();
            if text.is_empty() {
                continue;
            }
            let (cam, seq) = text.split_once(',').ok_or_else(|| IngestError::Script {
                line,
                reason: "expected `cam_id,seq`".into(),
            })?;
            let cam = cam.trim();
            if cam.is_empty() {
                return Err(IngestError::Script { line, reason: "empty camera id".into() });
            }
            let seq = seq.trim().parse::<u64>().map_err(|e| IngestError::Script {
                line,
                reason: format!("bad seq: {e}"),
            })?;
            script.push(line, cam.to_string(), seq)?;
        }
        Ok(script)
    }
}

impl fmt::Display for ReplayScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (cam, seq) in &self.pairs {
            writeln!(f, "{cam},{seq}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayOutcome {
    Admitted(usize),
    Skipped,
    RejectedFull,
}

pub fn replay_admit(
    buffer: &mut KeyframeBuffer,
    registry: &mut SensorRegistry,
    frame: &FrameSample,
    script: &ReplayScript,
) -> Result<ReplayOutcome, IngestError> {
    let prepared = prepare(buffer, registry, frame)?;
    if !script.contains(&frame.camera_id, frame.seq) {
        return Ok(ReplayOutcome::Skipped);
    }
    let blur = blur_score(&prepared.rgb);
    let novelty = pose_novelty(&prepared.pose, buffer.poses(), 0.0);
    Ok(match store(buffer, registry, prepared, blur, novelty)? {
        Some(i) => ReplayOutcome::Admitted(i),
        None => ReplayOutcome::RejectedFull,
    })
}
