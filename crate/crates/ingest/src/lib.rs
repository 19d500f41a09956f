//! Frame ingestion for online training.
//!
//! Incoming frames pass a blur filter and a pose-novelty filter before they
//! are resized to the canonical (largest) camera resolution and stored in a
//! fixed-capacity [`KeyframeBuffer`]. Training pulls ray batches that favour
//! entries not yet consumed. For reproducible comparisons a [`ReplayScript`]
//! admits exactly the listed `(camera, seq)` pairs instead.

mod admit;
mod buffer;
mod error;
mod filters;
mod rectify;
mod registry;
mod replay;
mod sample;
pub mod session;

pub use admit::{admit_frame, online_mode_ready, Admission};
pub use buffer::{KeyframeBuffer, KeyframeEntry, SharedKeyframeBuffer};
pub use error::IngestError;
pub use filters::{blur_score, pose_distance, pose_novelty, FilterPolicy};
pub use rectify::rectify_frame;
pub use registry::{SensorRegistry, SensorState};
pub use replay::{replay_admit, ReplayOutcome, ReplayScript};
pub use sample::{sample_batch, RayBatch, TrainRay};
