use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use crate::protocol::{Message, RenderStageMsg, StageKind};

/// Bounded per-connection send queue.
///
/// Render stages are accounted in pixels. When a new stage would exceed the
/// cap, queued stages are evicted oldest first: stages of requests other than
/// `current` before low-resolution stages, and those before full stages.
/// Control messages are never evicted.
#[derive(Debug, Clone)]
pub struct Outbound {
    inner: Arc<(Mutex<State>, Condvar)>,
}

#[derive(Debug)]
struct State {
    queue: VecDeque<Message>,
    pixels: usize,
    cap: usize,
    closed: bool,
}

pub enum Pop {
    Message(Message),
    Empty,
    Closed,
}

fn stage_pixels(msg: &Message) -> usize {
    match msg {
        Message::RenderStage(s) => s.width as usize * s.height as usize,
        _ => 0,
    }
}

impl Outbound {
    pub fn new(cap_pixels: usize) -> Self {
        Self {
            inner: Arc::new((
                Mutex::new(State {
                    queue: VecDeque::new(),
                    pixels: 0,
                    cap: cap_pixels,
                    closed: false,
                }),
                Condvar::new(),
            )),
        }
    }

    fn state(&self) -> MutexGuard<'_, State> {
        self.inner.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Queues a control message. Ignored once closed.
    pub fn push(&self, msg: Message) {
        let mut s = self.state();
        if s.closed {
            return;
        }
        s.pixels += stage_pixels(&msg);
        s.queue.push_back(msg);
        self.inner.1.notify_one();
    }

    /// Queues a stage, evicting as needed. Returns the number of stages
    /// evicted.
    pub fn push_stage(&self, stage: RenderStageMsg, current: u64) -> usize {
        let mut s = self.state();
        if s.closed {
            return 0;
        }
        let px = stage.width as usize * stage.height as usize;
        let mut evicted = 0;
        while s.pixels + px > s.cap {
            let victim = pick_victim(&s.queue, current);
            let Some(i) = victim else { break };
            let msg = s.queue.remove(i).expect("victim index is in range");
            s.pixels -= stage_pixels(&msg);
            evicted += 1;
        }
        s.pixels += px;
        s.queue.push_back(Message::RenderStage(stage));
        self.inner.1.notify_one();
        evicted
    }

    /// Removes queued stages of `request_id`; returns how many.
    pub fn purge_request(&self, request_id: u64) -> usize {
        let mut s = self.state();
        let before = s.queue.len();
        s.queue
            .retain(|m| !matches!(m, Message::RenderStage(st) if st.request_id == request_id));
        let removed = before - s.queue.len();
        s.pixels = s.queue.iter().map(stage_pixels).sum();
        removed
    }

    /// Waits up to `timeout` for a message.
    pub fn pop(&self, timeout: Duration) -> Pop {
        let mut s = self.state();
        if s.queue.is_empty() && !s.closed {
            s = self
                .inner
                .1
                .wait_timeout(s, timeout)
                .map(|(g, _)| g)
                .unwrap_or_else(|e| e.into_inner().0);
        }
        match s.queue.pop_front() {
            Some(m) => {
                s.pixels -= stage_pixels(&m);
                Pop::Message(m)
            }
            None if s.closed => Pop::Closed,
            None => Pop::Empty,
        }
    }

    /// Already-queued messages are still delivered after close.
    pub fn close(&self) {
        self.state().closed = true;
        self.inner.1.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state().closed
    }

    pub fn queued_pixels(&self) -> usize {
        self.state().pixels
    }

    pub fn len(&self) -> usize {
        self.state().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn drain(&self) -> Vec<Message> {
        let mut s = self.state();
        s.pixels = 0;
        s.queue.drain(..).collect()
    }
}

fn pick_victim(queue: &VecDeque<Message>, current: u64) -> Option<usize> {
    let stages = || {
        queue.iter().enumerate().filter_map(|(i, m)| match m {
            Message::RenderStage(s) => Some((i, s)),
            _ => None,
        })
    };
    stages()
        .find(|(_, s)| s.request_id != current)
        .or_else(|| stages().find(|(_, s)| s.stage != StageKind::S100))
        .or_else(|| stages().next())
        .map(|(i, _)| i)
}
