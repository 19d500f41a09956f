//! Network-facing render server.
//!
//! Clients connect over a length-prefixed binary stream (or the same
//! payloads over WebSocket on the console port), identify themselves with a
//! `Hello`, push frames and request renders. A single [`Scheduler`]
//! interleaves training steps with budgeted render slices; each request is
//! served as progressive stages (10%, 50%, 100%) and a newer request from
//! the same client supersedes the older one.

pub mod outbound;
pub mod protocol;
mod request;
mod scheduler;
pub mod server;
mod session;

pub use outbound::Outbound;
pub use protocol::{Message, ProtocolError, StageKind};
pub use request::{progressive_plan, Backend, ClientId, PlannedStage, RenderRequest, RequestFault, RequestMode};
pub use scheduler::{
    drain_events, frame_from_wire, serve_loop, ConnId, Event, FrameDecodeError, Scheduler, ServiceConfig,
    TrainingEngine,
};
pub use server::{spawn_listeners, ListenConfig, Listeners, WS_PATH};
pub use session::{ClientSession, PendingRequest, SessionStats, Sessions, SubmitOutcome};
