use std::collections::BTreeMap;

use rfnode_core::{PinholeCamera, Pose};

use crate::error::IngestError;

/// Per-camera bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    /// Latest intrinsics seen for this camera.
    pub camera: PinholeCamera,
    pub has_depth: bool,
    pub frames_seen: u64,
    pub first_timestamp: Option<f64>,
    pub last_timestamp: Option<f64>,
    pub last_admitted_pose: Option<Pose>,
}

impl SensorState {
    /// Mean frame rate in Hz over the frames seen so far.
    pub fn frame_rate(&self) -> Option<f64> {
        match (self.first_timestamp, self.last_timestamp) {
            (Some(a), Some(b)) if b > a && self.frames_seen > 1 => {
                Some((self.frames_seen - 1) as f64 / (b - a))
            }
            _ => None,
        }
    }
}

/// Registered cameras, keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorRegistry {
    sensors: BTreeMap<String, SensorState>,
}

impl SensorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        id: impl Into<String>,
        camera: PinholeCamera,
        has_depth: bool,
    ) -> Result<(), IngestError> {
        let id = id.into();
        if self.sensors.contains_key(&id) {
            return Err(IngestError::DuplicateCamera(id));
        }
        self.sensors.insert(
            id,
            SensorState {
                camera,
                has_depth,
                frames_seen: 0,
                first_timestamp: None,
                last_timestamp: None,
                last_admitted_pose: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&SensorState> {
        self.sensors.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut SensorState> {
        self.sensors.get_mut(id)
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SensorState)> {
        self.sensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Largest registered resolution by pixel count (first id wins ties).
    pub fn canonical_resolution(&self) -> Option<(u32, u32)> {
        self.sensors
            .values()
            .map(|s| (s.camera.width(), s.camera.height()))
            .fold(None, |best: Option<(u32, u32)>, dims| match best {
                Some(b) if (b.0 as u64 * b.1 as u64) >= (dims.0 as u64 * dims.1 as u64) => Some(b),
                _ => Some(dims),
            })
    }

    /// True iff at least one camera is registered and every camera has depth.
    pub fn all_have_depth(&self) -> bool {
        !self.sensors.is_empty() && self.sensors.values().all(|s| s.has_depth)
    }

    /// Records a received frame's intrinsics and timestamp.
    pub(crate) fn observe(&mut self, id: &str, camera: &PinholeCamera, timestamp: f64) -> Result<(), IngestError> {
        let state = self
            .sensors
            .get_mut(id)
            .ok_or_else(|| IngestError::UnregisteredCamera(id.to_string()))?;
        state.camera = *camera;
        state.frames_seen += 1;
        state.first_timestamp.get_or_insert(timestamp);
        state.last_timestamp = Some(timestamp);
        Ok(())
    }
}
