use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::time::Duration;

use rfnode_core::{CoreError, FrameSample, PinholeCamera, Pose, RenderError, RenderProduct, SceneRenderer, TrainStats};
use rfnode_ingest::pose_distance;
use rfnode_ingest::session::{decode_depth, decode_rgb};

use crate::outbound::Outbound;
use crate::protocol::{ErrorCode, ErrorMsg, FramePushMsg, Message, RenderStageMsg, Role, StageKind, StatsMsg};
use crate::request::{Backend, ClientId, PlannedStage, RenderRequest, RequestFault, RequestMode};
use crate::session::{PendingRequest, Sessions, SubmitOutcome};

pub type ConnId = u64;

/// What the scheduler drives between render slices.
pub trait TrainingEngine {
    /// Backends that can serve render requests.
    fn backends(&self) -> Vec<Backend>;
    /// True once online training may begin.
    fn ready(&self) -> bool;
    /// One optimisation step, or `None` when there is nothing to do.
    fn train_step(&mut self) -> Option<TrainStats>;
    fn steps(&self) -> u64;
    fn keyframes(&self) -> usize;
    /// Pose of the tracked sensor frame, if any.
    fn tracked_pose(&self) -> Option<Pose>;
    fn push_frame(&mut self, frame: FrameSample) -> Result<(), String>;
    /// Read-only snapshot of the current parameters.
    fn renderer(&mut self, backend: Backend) -> Result<Arc<dyn SceneRenderer>, RenderError>;
    /// Admits frames from sources other than sensor connections; runs at
    /// the start of every scheduler tick.
    fn ingest_pending(&mut self) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    /// Pixels rendered between consecutive training steps.
    pub slice_pixel_budget: usize,
    /// Queued stage pixels per connection.
    pub queue_pixel_cap: usize,
    /// Continuous clients re-render after this many training steps; 0 disables.
    pub continuous_step_interval: u64,
    /// Continuous clients re-render when the tracked pose moves this far.
    pub continuous_pose_threshold: f64,
    pub rotation_weight: f64,
    pub max_payload: usize,
    pub idle_wait_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            slice_pixel_budget: 200_000,
            queue_pixel_cap: 4_000_000,
            continuous_step_interval: 50,
            continuous_pose_threshold: 0.05,
            rotation_weight: 0.5,
            max_payload: crate::protocol::MAX_PAYLOAD,
            idle_wait_ms: 5,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.slice_pixel_budget == 0 || self.queue_pixel_cap == 0 {
            return Err("pixel budgets must be positive".into());
        }
        if !(self.continuous_pose_threshold >= 0.0 && self.rotation_weight >= 0.0) {
            return Err("continuous thresholds must be non-negative".into());
        }
        if self.max_payload < 64 {
            return Err("max_payload too small".into());
        }
        Ok(())
    }
}

pub enum Event {
    Connected { conn: ConnId, outbound: Outbound },
    Message { conn: ConnId, msg: Message },
    Disconnected { conn: ConnId },
}

struct Conn {
    outbound: Outbound,
    client: Option<(ClientId, Role)>,
}

/// Last completed continuous request and the state it was rendered at.
struct Standing {
    request: RenderRequest,
    pose: Option<Pose>,
    step: u64,
}

/// Owns sessions and connections; renders stages against engine snapshots.
pub struct Scheduler {
    config: ServiceConfig,
    conns: BTreeMap<ConnId, Conn>,
    by_client: HashMap<ClientId, ConnId>,
    sessions: Sessions,
    order: VecDeque<ClientId>,
    standing: HashMap<ClientId, Standing>,
    stats: StatsMsg,
}

impl Scheduler {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            conns: BTreeMap::new(),
            by_client: HashMap::new(),
            sessions: Sessions::new(),
            order: VecDeque::new(),
            standing: HashMap::new(),
            stats: StatsMsg::default(),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn sessions(&self) -> &Sessions {
        &self.sessions
    }

    pub fn stats(&self, engine: &dyn TrainingEngine) -> StatsMsg {
        StatsMsg {
            train_steps: engine.steps(),
            keyframes: engine.keyframes() as u64,
            clients: self.sessions.len() as u64,
            ..self.stats
        }
    }

    /// Number of clients with stages still to render.
    pub fn pending_clients(&self) -> usize {
        self.order.len()
    }

    pub fn handle(&mut self, event: Event, engine: &mut dyn TrainingEngine) {
        match event {
            Event::Connected { conn, outbound } => {
                self.conns.insert(conn, Conn { outbound, client: None });
            }
            Event::Message { conn, msg } => self.on_message(conn, msg, engine),
            Event::Disconnected { conn } => self.drop_conn(conn),
        }
    }

    fn drop_conn(&mut self, conn: ConnId) {
        if let Some(c) = self.conns.remove(&conn) {
            c.outbound.close();
            if let Some((client, _)) = c.client {
                self.by_client.remove(&client);
                self.standing.remove(&client);
                self.order.retain(|c| *c != client);
                if let Some(s) = self.sessions.disconnect(&client) {
                    let left = s.pending.map_or(0, |p| p.stages.len());
                    self.stats.stages_dropped += left as u64;
                }
            }
        }
    }

    fn send(&self, conn: ConnId, msg: Message) {
        if let Some(c) = self.conns.get(&conn) {
            c.outbound.push(msg);
        }
    }

    fn send_error(&self, conn: ConnId, request_id: u64, code: ErrorCode, message: impl Into<String>) {
        self.send(
            conn,
            Message::Error(ErrorMsg {
                request_id,
                code,
                message: message.into(),
            }),
        );
    }

    fn fatal(&mut self, conn: ConnId, message: &str) {
        self.send_error(conn, 0, ErrorCode::Protocol, message);
        if let Some(c) = self.conns.get(&conn) {
            c.outbound.close();
        }
    }

    fn on_message(&mut self, conn: ConnId, msg: Message, engine: &mut dyn TrainingEngine) {
        let Some(state) = self.conns.get(&conn) else { return };
        let Some((client, role)) = state.client else {
            match msg {
                Message::Hello(h) => {
                    if !self.sessions.connect(h.client_id) {
                        self.fatal(conn, "client id already connected");
                        return;
                    }
                    self.conns.get_mut(&conn).expect("checked above").client = Some((h.client_id, h.role));
                    self.by_client.insert(h.client_id, conn);
                    self.send(conn, Message::Stats(self.stats(engine)));
                }
                _ => self.fatal(conn, "expected hello"),
            }
            return;
        };
        match msg {
            Message::RenderRequest(wire) => {
                let id = wire.request_id;
                let stale = self
                    .sessions
                    .get(&client)
                    .and_then(|s| s.last_request_id)
                    .is_some_and(|last| id <= last);
                if stale {
                    self.reject(conn, id, ErrorCode::Stale, "stale");
                    return;
                }
                match RenderRequest::from_wire(client, &wire) {
                    Ok(req) => self.submit(conn, req, engine),
                    Err(RequestFault::Backend(b)) => self.reject(conn, id, ErrorCode::Backend, &format!("backend {b}")),
                    Err(RequestFault::Invalid(why)) => self.reject(conn, id, ErrorCode::Invalid, &why),
                }
            }
            Message::Cancel { request_id } => {
                if self.sessions.cancel(&client, request_id).is_some() {
                    self.standing.remove(&client);
                    self.order.retain(|c| *c != client);
                    self.purge(conn, request_id);
                } else if self.standing.get(&client).is_some_and(|s| s.request.request_id == request_id) {
                    self.standing.remove(&client);
                }
            }
            Message::FramePush(f) => {
                if role != Role::Sensor {
                    self.send_error(conn, 0, ErrorCode::Ingest, "frame push requires the sensor role");
                    return;
                }
                let result = frame_from_wire(&f).map_err(|e| e.to_string()).and_then(|frame| engine.push_frame(frame));
                if let Err(e) = result {
                    self.send_error(conn, 0, ErrorCode::Ingest, e);
                }
            }
            Message::Hello(_) => self.fatal(conn, "duplicate hello"),
            Message::RenderStage(_) | Message::Stats(_) | Message::Error(_) => {
                self.fatal(conn, "message type is server to client only")
            }
        }
    }

    fn reject(&mut self, conn: ConnId, request_id: u64, code: ErrorCode, why: &str) {
        self.stats.requests_rejected += 1;
        self.send_error(conn, request_id, code, why);
    }

    fn purge(&mut self, conn: ConnId, request_id: u64) {
        if let Some(c) = self.conns.get(&conn) {
            self.stats.stages_dropped += c.outbound.purge_request(request_id) as u64;
        }
    }

    fn submit(&mut self, conn: ConnId, req: RenderRequest, engine: &dyn TrainingEngine) {
        let client = req.client_id;
        let id = req.request_id;
        let prior_standing = self.standing.remove(&client);
        let unrendered = self
            .sessions
            .get(&client)
            .and_then(|s| s.pending.as_ref())
            .map_or(0, |p| p.stages.len() as u64);
        match self.sessions.submit(req, &engine.backends()) {
            SubmitOutcome::Accepted => {
                self.stats.requests_accepted += 1;
                if let Some(s) = prior_standing {
                    self.purge(conn, s.request.request_id);
                }
            }
            SubmitOutcome::Superseded(prior) => {
                self.stats.requests_accepted += 1;
                self.stats.requests_superseded += 1;
                self.stats.stages_dropped += unrendered;
                self.purge(conn, prior);
                if let Some(s) = prior_standing {
                    self.purge(conn, s.request.request_id);
                }
            }
            SubmitOutcome::Rejected(why) => {
                if let Some(s) = prior_standing {
                    self.standing.insert(client, s);
                }
                let code = if why == "backend" { ErrorCode::Backend } else { ErrorCode::Invalid };
                self.reject(conn, id, code, why);
                return;
            }
        }
        if !self.order.contains(&client) {
            self.order.push_back(client);
        }
    }

    /// Queues an s100 re-render for continuous clients whose tracked pose moved
    /// or whose model advanced by the checkpoint interval.
    pub fn continuous_triggers(&mut self, engine: &dyn TrainingEngine) {
        let steps = engine.steps();
        let pose = engine.tracked_pose();
        let interval = self.config.continuous_step_interval;
        let mut due = Vec::new();
        for (client, s) in &self.standing {
            let by_steps = interval > 0 && steps >= s.step + interval;
            let by_pose = match (pose, s.pose) {
                (Some(now), Some(then)) => {
                    pose_distance(&now, &then, self.config.rotation_weight) > self.config.continuous_pose_threshold
                }
                (Some(_), None) => true,
                _ => false,
            };
            if by_steps || by_pose {
                due.push(*client);
            }
        }
        due.sort();
        for client in due {
            let Some(s) = self.standing.remove(&client) else { continue };
            let Some(session) = self.sessions.get_mut(&client) else { continue };
            if session.pending.is_some() {
                continue;
            }
            let camera = s.request.intrinsics;
            session.pending = Some(PendingRequest {
                request: s.request,
                stages: VecDeque::from([PlannedStage {
                    stage: StageKind::S100,
                    fraction: 1.0,
                    camera,
                }]),
                last_snapshot_step: None,
            });
            if !self.order.contains(&client) {
                self.order.push_back(client);
            }
        }
    }

    /// Renders queued stages round-robin across clients until the slice
    /// budget is spent (at least one stage per call). `poll` runs after each
    /// render so messages that arrived meanwhile can supersede the stage
    /// before it is sent. Returns the number of stages rendered.
    pub fn render_slice(
        &mut self,
        engine: &mut dyn TrainingEngine,
        poll: &mut dyn FnMut(&mut Scheduler, &mut dyn TrainingEngine),
    ) -> usize {
        if !engine.ready() {
            return 0;
        }
        let budget = self.config.slice_pixel_budget;
        let mut used = 0usize;
        let mut rendered = 0usize;
        while let Some(client) = self.order.pop_front() {
            let Some(pending) = self.sessions.get_mut(&client).and_then(|s| s.pending.as_mut()) else {
                continue;
            };
            let Some(next) = pending.stages.front() else {
                continue;
            };
            let px = next.camera.pixel_count();
            if rendered > 0 && used + px > budget {
                self.order.push_front(client);
                break;
            }
            let stage = pending.stages.pop_front().expect("front checked");
            let request = pending.request.clone();
            let step = engine.steps();
            debug_assert!(pending.last_snapshot_step.map_or(true, |s| s <= step));
            pending.last_snapshot_step = Some(step);
            used += px;
            rendered += 1;

            let result = engine
                .renderer(request.backend)
                .and_then(|r| r.render(&stage.camera, &request.pose, request.crop.as_ref()));
            poll(self, engine);

            let Some(session) = self.sessions.get_mut(&client) else { continue };
            if session.current_request() != Some(request.request_id) {
                session.stats.stages_dropped += 1;
                self.stats.stages_dropped += 1;
                continue;
            }
            let Some(&conn) = self.by_client.get(&client) else { continue };
            let pending = session.pending.as_mut().expect("current request is pending");
            match result {
                Ok(product) => {
                    let msg = stage_message(request.request_id, stage.stage, &product, request.want_depth);
                    let evicted = self.conns.get(&conn).map_or(0, |c| c.outbound.push_stage(msg, request.request_id));
                    self.stats.stages_sent += 1;
                    self.stats.stages_dropped += evicted as u64;
                    if pending.stages.is_empty() {
                        session.pending = None;
                        session.stats.requests_served += 1;
                        if request.mode == RequestMode::Continuous {
                            self.standing.insert(
                                client,
                                Standing {
                                    request,
                                    pose: engine.tracked_pose(),
                                    step,
                                },
                            );
                        }
                        let stats = self.stats(engine);
                        self.send(conn, Message::Stats(stats));
                    } else if !self.order.contains(&client) {
                        self.order.push_back(client);
                    }
                }
                Err(e) => {
                    let left = pending.stages.len() as u64;
                    session.pending = None;
                    session.stats.stages_dropped += left;
                    self.stats.stages_dropped += left;
                    self.send_error(conn, request.request_id, ErrorCode::Render, e.to_string());
                }
            }
        }
        rendered
    }

    /// One training step (when ready), continuous triggers, one render slice.
    /// Returns true if any work was done.
    pub fn tick(
        &mut self,
        engine: &mut dyn TrainingEngine,
        poll: &mut dyn FnMut(&mut Scheduler, &mut dyn TrainingEngine),
    ) -> bool {
        engine.ingest_pending();
        let trained = engine.ready() && engine.train_step().is_some();
        self.continuous_triggers(engine);
        let rendered = self.render_slice(engine, poll);
        trained || rendered > 0
    }

    /// Closes every connection queue.
    pub fn shutdown(&mut self) {
        for c in self.conns.values() {
            c.outbound.close();
        }
    }
}

fn stage_message(request_id: u64, stage: StageKind, product: &RenderProduct, want_depth: bool) -> RenderStageMsg {
    let (w, h) = product.dims();
    RenderStageMsg {
        request_id,
        stage,
        width: w as u16,
        height: h as u16,
        render_time_us: (product.render_time * 1e6).round().clamp(0.0, u32::MAX as f64) as u32,
        rgb: product.rgb.to_rgb8(),
        depth: want_depth.then(|| product.depth.pixels().to_vec()),
    }
}

/// Decodes the PNG payloads of a frame push.
pub fn frame_from_wire(f: &FramePushMsg) -> Result<FrameSample, FrameDecodeError> {
    let [fx, fy, cx, cy] = f.intrinsics;
    let rectified = f.distortion == [0.0; 4];
    let camera = PinholeCamera::with_distortion(fx, fy, cx, cy, f.width as u32, f.height as u32, f.distortion, rectified)?;
    let p = f.pose;
    let pose = Pose::new([p[0], p[1], p[2], p[3]], [p[4], p[5], p[6]])?;
    let rgb = decode_rgb(&f.rgb_png).map_err(|e| FrameDecodeError::Image(e.to_string()))?;
    let depth = match &f.depth_png {
        Some(bytes) => {
            if !(f.depth_scale > 0.0 && f.depth_scale.is_finite()) {
                return Err(FrameDecodeError::Image(format!("bad depth scale {}", f.depth_scale)));
            }
            Some(decode_depth(bytes, f.depth_scale).map_err(|e| FrameDecodeError::Image(e.to_string()))?)
        }
        None => None,
    };
    let frame = FrameSample {
        camera_id: f.camera_id.clone(),
        seq: f.seq,
        timestamp: f.timestamp,
        rgb,
        depth,
        pose,
        camera,
    };
    frame.validate()?;
    Ok(frame)
}

#[derive(Debug, thiserror::Error)]
pub enum FrameDecodeError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("image: {0}")]
    Image(String),
}

/// Drains every queued event without blocking.
pub fn drain_events(sched: &mut Scheduler, engine: &mut dyn TrainingEngine, events: &Receiver<Event>) -> bool {
    loop {
        match events.try_recv() {
            Ok(ev) => sched.handle(ev, engine),
            Err(TryRecvError::Empty) => return true,
            Err(TryRecvError::Disconnected) => return false,
        }
    }
}

/// Runs the cooperative train/render loop until `shutdown` is set or every
/// event sender is gone.
pub fn serve_loop(
    engine: &mut dyn TrainingEngine,
    events: &Receiver<Event>,
    config: ServiceConfig,
    shutdown: &AtomicBool,
) -> StatsMsg {
    let mut sched = Scheduler::new(config);
    let idle = Duration::from_millis(sched.config.idle_wait_ms.max(1));
    while !shutdown.load(Ordering::Relaxed) {
        if !drain_events(&mut sched, engine, events) {
            break;
        }
        let busy = sched.tick(engine, &mut |s, e| {
            drain_events(s, e, events);
        });
        if !busy {
            match events.recv_timeout(idle) {
                Ok(ev) => sched.handle(ev, engine),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
    }
    let stats = sched.stats(engine);
    sched.shutdown();
    stats
}
