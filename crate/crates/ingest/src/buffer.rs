use std::sync::{Arc, Mutex, MutexGuard};

use rfnode_core::{DepthImage, PinholeCamera, Pose, RgbImage};

use crate::error::IngestError;
use crate::registry::SensorRegistry;

/// One stored training view at canonical resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeEntry {
    pub camera_id: String,
    pub seq: u64,
    pub timestamp: f64,
    pub rgb: RgbImage,
    pub depth: Option<DepthImage>,
    /// Intrinsics rescaled to the canonical resolution.
    pub camera: PinholeCamera,
    pub pose: Pose,
    /// Filter measurements taken at admission (`+∞` novelty for the first frame).
    pub blur_score: f64,
    pub novelty: f64,
}

/// Fixed-capacity store of admitted keyframes.
///
/// Entries are never evicted; once full, further admissions are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeBuffer {
    capacity: usize,
    canonical: (u32, u32),
    depth_enabled: bool,
    entries: Vec<KeyframeEntry>,
    updated: Vec<bool>,
}

impl KeyframeBuffer {
    /// Sizes the buffer for the cameras currently registered.
    pub fn new(capacity: usize, registry: &SensorRegistry) -> Result<Self, IngestError> {
        let canonical = registry.canonical_resolution().ok_or(IngestError::NoCameras)?;
        Ok(Self::with_layout(capacity, canonical, registry.all_have_depth()))
    }

    pub fn with_layout(capacity: usize, canonical: (u32, u32), depth_enabled: bool) -> Self {
        Self {
            capacity,
            canonical,
            depth_enabled,
            entries: Vec::with_capacity(capacity),
            updated: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn canonical_size(&self) -> (u32, u32) {
        self.canonical
    }

    pub fn depth_enabled(&self) -> bool {
        self.depth_enabled
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn entries(&self) -> &[KeyframeEntry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> Option<&KeyframeEntry> {
        self.entries.get(index)
    }

    pub fn is_updated(&self, index: usize) -> bool {
        self.updated.get(index).copied().unwrap_or(false)
    }

    pub fn updated_indices(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.updated[i]).collect()
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.entries.iter().map(|e| &e.pose)
    }

    pub(crate) fn clear_updated(&mut self, index: usize) {
        self.updated[index] = false;
    }

    /// Stores an entry that already has canonical dimensions; returns its
    /// index, or `None` when full.
    pub(crate) fn push(&mut self, entry: KeyframeEntry) -> Option<usize> {
        if self.is_full() {
            return None;
        }
        debug_assert_eq!(entry.rgb.dims(), (self.canonical.0 as usize, self.canonical.1 as usize));
        debug_assert_eq!(entry.depth.is_some(), self.depth_enabled);
        self.entries.push(entry);
        self.updated.push(true);
        Some(self.entries.len() - 1)
    }

    /// Picks one training view: the lowest-index updated entry if any (its
    /// flag is cleared), otherwise a seeded uniform choice.
    pub fn select_view(&mut self, seed: u64) -> Result<usize, IngestError> {
        if self.entries.is_empty() {
            return Err(IngestError::EmptyBuffer);
        }
        if let Some(i) = self.updated.iter().position(|&u| u) {
            self.updated[i] = false;
            return Ok(i);
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Ok(rng.gen_range(0..self.entries.len()))
    }
}

/// A keyframe buffer shared between an admitting writer and a training
/// reader. Every operation holds the lock for its whole duration, so a batch
/// never observes a half-written entry and flag clearing is atomic with batch
/// construction.
#[derive(Debug, Clone)]
pub struct SharedKeyframeBuffer(Arc<Mutex<KeyframeBuffer>>);

impl SharedKeyframeBuffer {
    pub fn new(buffer: KeyframeBuffer) -> Self {
        Self(Arc::new(Mutex::new(buffer)))
    }

    pub fn lock(&self) -> MutexGuard<'_, KeyframeBuffer> {
        // A poisoned lock still holds a consistent buffer: entries are pushed whole.
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}
