use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rfnode_core::{FrameSample, Pose, RenderError, SceneRenderer, TrainStats};
use rfnode_eval::{Method, Model, ModelConfig};
use rfnode_ingest::session::Session;
use rfnode_ingest::{
    admit_frame, online_mode_ready, replay_admit, FilterPolicy, KeyframeBuffer, ReplayScript, SensorRegistry,
};
use rfnode_service::{Backend, TrainingEngine};

pub fn method_of(backend: Backend) -> Method {
    match backend {
        Backend::Voxel => Method::Voxel,
        Backend::Splat => Method::Splat,
        Backend::Mesh => Method::Mesh,
    }
}

/// Session log fed into the buffer at recorded timestamps.
pub struct ReplayFeed {
    session: Session,
    script: Option<ReplayScript>,
    /// Playback rate; 0 admits every frame at once.
    speed: f64,
    next: usize,
    start: Option<Instant>,
}

impl ReplayFeed {
    pub fn new(session: Session, script: Option<ReplayScript>, speed: f64) -> Self {
        Self { session, script, speed, next: 0, start: None }
    }

    pub fn exhausted(&self) -> bool {
        self.next >= self.session.len()
    }

    fn due(&mut self, i: usize) -> bool {
        if self.speed <= 0.0 {
            return true;
        }
        let frames = &self.session.manifest().frames;
        let start = *self.start.get_or_insert_with(Instant::now);
        let offset = frames[i].t - frames[0].t;
        start.elapsed().as_secs_f64() * self.speed >= offset
    }
}

/// Ingest, buffer and a single scene model behind the service loop.
pub struct ServeEngine {
    backend: Backend,
    model_config: ModelConfig,
    policy: FilterPolicy,
    capacity: usize,
    registry: SensorRegistry,
    buffer: Option<KeyframeBuffer>,
    model: Option<Model>,
    replay: Option<ReplayFeed>,
    max_steps: Option<u64>,
    stop: Arc<AtomicBool>,
    last_pose: Option<Pose>,
    failed: bool,
}

impl ServeEngine {
    pub fn new(
        backend: Backend,
        model_config: ModelConfig,
        policy: FilterPolicy,
        capacity: usize,
        stop: Arc<AtomicBool>,
    ) -> Self {
        Self {
            backend,
            model_config,
            policy,
            capacity,
            registry: SensorRegistry::new(),
            buffer: None,
            model: None,
            replay: None,
            max_steps: None,
            stop,
            last_pose: None,
            failed: false,
        }
    }

    pub fn with_replay(mut self, feed: ReplayFeed) -> Result<Self, String> {
        let registry = feed.session.manifest().registry().map_err(|e| e.to_string())?;
        self.buffer = Some(KeyframeBuffer::new(self.capacity, &registry).map_err(|e| e.to_string())?);
        self.registry = registry;
        self.replay = Some(feed);
        Ok(self)
    }

    /// Requests shutdown after this many steps, or once a replay is used up
    /// and the model has nothing left to do.
    pub fn with_max_steps(mut self, max_steps: Option<u64>) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn buffer(&self) -> Option<&KeyframeBuffer> {
        self.buffer.as_ref()
    }

    /// Final parameters, if a model was ever built.
    pub fn checkpoint(&mut self) -> Option<Vec<u8>> {
        self.model.as_mut().map(|m| m.checkpoint())
    }

    fn replay_exhausted(&self) -> bool {
        self.replay.as_ref().is_some_and(|r| r.exhausted())
    }

    fn admit(&mut self, frame: &FrameSample) -> Result<bool, String> {
        if self.registry.get(&frame.camera_id).is_none() {
            self.registry
                .register(frame.camera_id.clone(), frame.camera, frame.depth.is_some())
                .map_err(|e| e.to_string())?;
        }
        let buffer = self.buffer.get_or_insert_with(|| {
            KeyframeBuffer::with_layout(
                self.capacity,
                (frame.camera.width(), frame.camera.height()),
                frame.depth.is_some(),
            )
        });
        self.last_pose = Some(frame.pose);
        let script = self.replay.as_ref().and_then(|r| r.script.as_ref());
        let admitted = match script {
            Some(s) => replay_admit(buffer, &mut self.registry, frame, s).map(|o| matches!(o, rfnode_ingest::ReplayOutcome::Admitted(_))),
            None => admit_frame(buffer, &mut self.registry, frame, &self.policy).map(|a| a.is_admitted()),
        };
        admitted.map_err(|e| e.to_string())
    }
}

impl TrainingEngine for ServeEngine {
    fn backends(&self) -> Vec<Backend> {
        vec![self.backend]
    }

    fn ready(&self) -> bool {
        if self.failed {
            return false;
        }
        match &self.buffer {
            Some(b) if !b.is_empty() => online_mode_ready(b, &self.policy) || self.replay_exhausted(),
            _ => false,
        }
    }

    fn train_step(&mut self) -> Option<TrainStats> {
        let buffer = self.buffer.as_mut()?;
        if self.model.is_none() {
            match Model::new(method_of(self.backend), buffer, &self.model_config) {
                Ok(m) => {
                    info!("{} model initialized from {} keyframes", self.backend.name(), buffer.len());
                    self.model = Some(m);
                }
                Err(e) => {
                    warn!("cannot build {} model: {e}", self.backend.name());
                    self.failed = true;
                    return None;
                }
            }
        }
        let model = self.model.as_mut()?;
        let replay_done = self.replay.as_ref().is_some_and(|r| r.exhausted());
        if let Some(max) = self.max_steps {
            if model.steps() >= max || (replay_done && !model.has_work(buffer)) {
                self.stop.store(true, Ordering::Relaxed);
                return None;
            }
        }
        match model.step(buffer) {
            Ok(stats) => stats,
            Err(e) => {
                warn!("training step failed: {e}");
                None
            }
        }
    }

    fn steps(&self) -> u64 {
        self.model.as_ref().map_or(0, |m| m.steps())
    }

    fn keyframes(&self) -> usize {
        self.buffer.as_ref().map_or(0, |b| b.len())
    }

    fn tracked_pose(&self) -> Option<Pose> {
        self.last_pose
    }

    fn push_frame(&mut self, frame: FrameSample) -> Result<(), String> {
        self.admit(&frame).map(|_| ())
    }

    fn renderer(&mut self, backend: Backend) -> Result<Arc<dyn SceneRenderer>, RenderError> {
        if backend != self.backend {
            return Err(RenderError::NotReady(format!("backend {} is not being served", backend.name())));
        }
        match self.model.as_mut() {
            Some(m) => Ok(m.renderer()),
            None => Err(RenderError::NotReady("no keyframes trained yet".into())),
        }
    }

    fn ingest_pending(&mut self) {
        loop {
            let Some(feed) = self.replay.as_mut() else { return };
            if feed.exhausted() || !feed.due(feed.next) {
                return;
            }
            let i = feed.next;
            feed.next += 1;
            let frame = match feed.session.load_frame(i) {
                Ok(f) => f,
                Err(e) => {
                    warn!("replay frame {i}: {e}");
                    continue;
                }
            };
            if let Err(e) = self.admit(&frame) {
                warn!("replay frame {i}: {e}");
            }
            if self.replay_exhausted() {
                info!("replay finished with {} keyframes", self.keyframes());
            }
        }
    }
}
