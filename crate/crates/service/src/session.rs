use std::collections::{BTreeMap, VecDeque};

use crate::request::{progressive_plan, Backend, ClientId, PlannedStage, RenderRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted,
    Superseded(u64),
    Rejected(&'static str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub requests_served: u64,
    pub stages_dropped: u64,
}

/// A request with the stages it still has to render.
#[derive(Debug, Clone)]
pub struct PendingRequest {
    pub request: RenderRequest,
    pub stages: VecDeque<PlannedStage>,
    /// Training step of the snapshot used for the last rendered stage.
    pub last_snapshot_step: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ClientSession {
    pub client_id: ClientId,
    pub last_request_id: Option<u64>,
    pub pending: Option<PendingRequest>,
    pub stats: SessionStats,
}

impl ClientSession {
    pub fn new(client_id: ClientId) -> Self {
        Self {
            client_id,
            last_request_id: None,
            pending: None,
            stats: SessionStats::default(),
        }
    }

    /// Id of the newest accepted request.
    pub fn current_request(&self) -> Option<u64> {
        self.pending.as_ref().map(|p| p.request.request_id)
    }
}

/// All connected clients, keyed by client id.
#[derive(Debug, Default)]
pub struct Sessions {
    clients: BTreeMap<ClientId, ClientSession>,
}

impl Sessions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a client (handshake). Returns false if it is already known.
    pub fn connect(&mut self, client_id: ClientId) -> bool {
        if self.clients.contains_key(&client_id) {
            return false;
        }
        self.clients.insert(client_id, ClientSession::new(client_id));
        true
    }

    pub fn disconnect(&mut self, client_id: &ClientId) -> Option<ClientSession> {
        self.clients.remove(client_id)
    }

    pub fn get(&self, client_id: &ClientId) -> Option<&ClientSession> {
        self.clients.get(client_id)
    }

    pub fn get_mut(&mut self, client_id: &ClientId) -> Option<&mut ClientSession> {
        self.clients.get_mut(client_id)
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClientSession> {
        self.clients.values()
    }

    /// Checks monotonicity and replaces any pending request of the same
    /// client. Unstarted stages of the replaced request are dropped.
    pub fn submit(&mut self, request: RenderRequest, available: &[Backend]) -> SubmitOutcome {
        let Some(session) = self.clients.get_mut(&request.client_id) else {
            return SubmitOutcome::Rejected("handshake");
        };
        if session.last_request_id.is_some_and(|last| request.request_id <= last) {
            return SubmitOutcome::Rejected("stale");
        }
        if !available.contains(&request.backend) {
            return SubmitOutcome::Rejected("backend");
        }
        session.last_request_id = Some(request.request_id);
        let stages = progressive_plan(&request.intrinsics, request.progressive).into();
        let prior = session.pending.replace(PendingRequest {
            request,
            stages,
            last_snapshot_step: None,
        });
        match prior {
            Some(p) => {
                session.stats.stages_dropped += p.stages.len() as u64;
                SubmitOutcome::Superseded(p.request.request_id)
            }
            None => SubmitOutcome::Accepted,
        }
    }

    /// Drops the pending request if it has the given id. Returns the number
    /// of unrendered stages discarded, or `None` if nothing matched.
    pub fn cancel(&mut self, client_id: &ClientId, request_id: u64) -> Option<usize> {
        let session = self.clients.get_mut(client_id)?;
        if session.current_request() != Some(request_id) {
            return None;
        }
        let p = session.pending.take()?;
        session.stats.stages_dropped += p.stages.len() as u64;
        Some(p.stages.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::request::RequestMode;
    use rfnode_core::{PinholeCamera, Pose};

    fn req(client: u8, id: u64, backend: Backend) -> RenderRequest {
        RenderRequest {
            client_id: [client; 16],
            request_id: id,
            pose: Pose::identity(),
            intrinsics: PinholeCamera::new(10.0, 10.0, 5.0, 5.0, 10, 10).unwrap(),
            crop: None,
            backend,
            want_depth: false,
            mode: RequestMode::Dynamic,
            progressive: true,
        }
    }

    const ALL: &[Backend] = &Backend::ALL;

    #[test]
    fn supersession_and_staleness() {
        let mut s = Sessions::new();
        assert!(s.connect([1; 16]));
        assert!(!s.connect([1; 16]));
        assert_eq!(s.submit(req(1, 1, Backend::Splat), ALL), SubmitOutcome::Accepted);
        assert_eq!(s.submit(req(1, 2, Backend::Splat), ALL), SubmitOutcome::Superseded(1));
        assert_eq!(s.get(&[1; 16]).unwrap().stats.stages_dropped, 3);
        assert_eq!(s.submit(req(1, 2, Backend::Splat), ALL), SubmitOutcome::Rejected("stale"));
        assert_eq!(s.submit(req(1, 7, Backend::Splat), ALL), SubmitOutcome::Superseded(2));
        assert_eq!(s.submit(req(1, 5, Backend::Splat), ALL), SubmitOutcome::Rejected("stale"));
        assert_eq!(s.get(&[1; 16]).unwrap().current_request(), Some(7));
    }

    #[test]
    fn clients_are_independent() {
        let mut s = Sessions::new();
        s.connect([1; 16]);
        s.connect([2; 16]);
        assert_eq!(s.submit(req(1, 1, Backend::Voxel), ALL), SubmitOutcome::Accepted);
        assert_eq!(s.submit(req(2, 1, Backend::Voxel), ALL), SubmitOutcome::Accepted);
        assert_eq!(s.get(&[1; 16]).unwrap().pending.as_ref().unwrap().stages.len(), 3);
        assert_eq!(s.get(&[2; 16]).unwrap().pending.as_ref().unwrap().stages.len(), 3);
    }

    #[test]
    fn backend_and_handshake_rejections() {
        let mut s = Sessions::new();
        assert_eq!(s.submit(req(1, 1, Backend::Voxel), ALL), SubmitOutcome::Rejected("handshake"));
        s.connect([1; 16]);
        assert_eq!(s.submit(req(1, 1, Backend::Mesh), &[Backend::Splat]), SubmitOutcome::Rejected("backend"));
        // a rejected id does not advance the sequence
        assert_eq!(s.submit(req(1, 1, Backend::Splat), &[Backend::Splat]), SubmitOutcome::Accepted);
    }

    #[test]
    fn cancel_matches_only_current() {
        let mut s = Sessions::new();
        s.connect([1; 16]);
        s.submit(req(1, 3, Backend::Splat), ALL);
        assert_eq!(s.cancel(&[1; 16], 2), None);
        assert_eq!(s.cancel(&[1; 16], 3), Some(3));
        assert_eq!(s.get(&[1; 16]).unwrap().current_request(), None);
        assert_eq!(s.cancel(&[1; 16], 3), None);
    }
}
