//! WebSocket service for live sessions.
//!
//! One session at a time on `/ws`. The socket reader decodes messages and
//! hands them to a blocking worker through a small queue; when frames
//! arrive faster than they are processed the oldest queued frame is dropped.
//! Commands are never dropped and keep their order relative to frames.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use log::{debug, info, warn};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use super::config::PipelineConfig;
use super::fps::SystemClock;
use super::pipeline::Session;
use super::wire::{
    decode_frame, parse_command, Command, ErrorCode, FaceState, ServerMessage, StateMessage, HEADER_LEN,
    MAX_FRAME_PIXELS,
};
use crate::error::Result;
use crate::imagecore::GrayImage;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceOptions {
    /// Frames waiting for the worker before the oldest is dropped.
    pub queue_capacity: usize,
    pub max_frame_pixels: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { queue_capacity: 2, max_frame_pixels: MAX_FRAME_PIXELS }
    }
}

#[derive(Debug)]
pub enum Job {
    Frame(u64, GrayImage),
    Command(Command),
}

#[derive(Default)]
struct QueueState {
    jobs: VecDeque<Job>,
    frames: usize,
    dropped: u64,
    closed: bool,
}

/// Bounded hand-off between the socket reader and the worker.
pub struct JobQueue {
    capacity: usize,
    state: Mutex<QueueState>,
    ready: Condvar,
}

impl JobQueue {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), state: Mutex::default(), ready: Condvar::new() }
    }

    /// Queues a job. Returns the index of a frame that was dropped to make room.
    pub fn push(&self, job: Job) -> Option<u64> {
        let mut st = self.state.lock().unwrap();
        let mut dropped = None;
        if let Job::Frame(..) = job {
            if st.frames >= self.capacity {
                let oldest = st.jobs.iter().position(|j| matches!(j, Job::Frame(..))).expect("frame count is tracked");
                if let Some(Job::Frame(i, _)) = st.jobs.remove(oldest) {
                    dropped = Some(i);
                }
                st.frames -= 1;
                st.dropped += 1;
            }
            st.frames += 1;
        }
        st.jobs.push_back(job);
        self.ready.notify_one();
        dropped
    }

    /// Blocks until a job is available. `None` once closed and drained.
    pub fn pop(&self) -> Option<Job> {
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(j) = st.jobs.pop_front() {
                if let Job::Frame(..) = j {
                    st.frames -= 1;
                }
                return Some(j);
            }
            if st.closed {
                return None;
            }
            st = self.ready.wait(st).unwrap();
        }
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().unwrap().dropped
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The state message for a frame `session` has just processed.
pub fn state_message(session: &Session, frame: u64, events: Vec<super::events::EventRecord>) -> StateMessage {
    let face = session.eyes().map(|[l, r]| FaceState {
        bte: Point::new((l.x + r.x) / 2.0, (l.y + r.y) / 2.0),
        left_eye: l,
        right_eye: r,
    });
    StateMessage {
        frame,
        calibrated: session.calibrated(),
        fps: session.fps(),
        face,
        nose: session.nose(),
        pointer: session.pointer(),
        events,
    }
}

/// Runs queued jobs against `session` until the queue closes.
pub fn run_worker(mut session: Session, queue: &JobQueue, out: &mpsc::UnboundedSender<ServerMessage>) {
    while let Some(job) = queue.pop() {
        let msg = match job {
            Job::Frame(idx, img) => {
                let o = session.process(idx, &img);
                ServerMessage::State(state_message(&session, idx, o.events))
            }
            Job::Command(Command::Reset) => {
                session.reset();
                ServerMessage::Ack { cmd: "reset".into() }
            }
            Job::Command(Command::Config { patch }) => {
                match session.config().patched(&Value::Object(patch)).and_then(|c| session.set_config(c)) {
                    Ok(()) => ServerMessage::Ack { cmd: "config".into() },
                    Err(e) => ServerMessage::Error { code: ErrorCode::BadCommand, message: e.to_string() },
                }
            }
        };
        if out.send(msg).is_err() {
            break;
        }
    }
}

/// Closes the queue and frees the session slot even if the connection
/// task is cancelled, so the blocking worker always finishes.
struct SessionGuard {
    queue: Arc<JobQueue>,
    shared: Arc<Shared>,
}

impl Drop for SessionGuard {
    fn drop(&mut self) {
        self.queue.close();
        self.shared.busy.store(false, Ordering::SeqCst);
    }
}

struct Shared {
    cfg: PipelineConfig,
    opts: ServiceOptions,
    busy: AtomicBool,
}

pub fn router(cfg: PipelineConfig, opts: ServiceOptions) -> Router {
    let shared = Arc::new(Shared { cfg, opts, busy: AtomicBool::new(false) });
    Router::new()
        .route("/", get(|| async { "facemouse: connect a WebSocket to /ws\n" }))
        .route("/ws", get(upgrade))
        .with_state(shared)
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    let limit = HEADER_LEN + shared.opts.max_frame_pixels;
    // leave room so oversized frames get a proper error reply
    ws.max_message_size(limit.saturating_mul(2).max(1 << 20)).on_upgrade(move |socket| connection(socket, shared))
}

async fn connection(socket: WebSocket, shared: Arc<Shared>) {
    let (mut tx, mut rx) = socket.split();
    if shared.busy.swap(true, Ordering::SeqCst) {
        let busy = ServerMessage::Error { code: ErrorCode::Busy, message: "another session is active".into() };
        let _ = tx.send(Message::Text(busy.to_text().into())).await;
        let _ = tx.close().await;
        return;
    }
    info!("session started");
    let session = match Session::new(shared.cfg.clone(), Box::new(SystemClock::new())) {
        Ok(s) => s,
        Err(e) => {
            warn!("cannot start session: {e}");
            shared.busy.store(false, Ordering::SeqCst);
            return;
        }
    };

    let queue = Arc::new(JobQueue::new(shared.opts.queue_capacity));
    let guard = SessionGuard { queue: queue.clone(), shared: shared.clone() };
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<ServerMessage>();
    let worker = {
        let (queue, out_tx) = (queue.clone(), out_tx.clone());
        tokio::task::spawn_blocking(move || run_worker(session, &queue, &out_tx))
    };
    let writer = tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            if tx.send(Message::Text(m.to_text().into())).await.is_err() {
                break;
            }
        }
        let _ = tx.close().await;
    });

    let mut received = 0u64;
    while let Some(msg) = rx.next().await {
        let msg = match msg {
            Ok(m) => m,
            Err(e) => {
                debug!("socket error: {e}");
                break;
            }
        };
        match msg {
            Message::Binary(bytes) => match decode_frame(&bytes, shared.opts.max_frame_pixels) {
                Ok(img) => {
                    if let Some(i) = queue.push(Job::Frame(received, img)) {
                        debug!("dropped frame {i}");
                    }
                    received += 1;
                }
                Err(e) => {
                    let _ = out_tx.send(e.into());
                }
            },
            Message::Text(text) => match parse_command(&text) {
                Ok(cmd) => {
                    queue.push(Job::Command(cmd));
                }
                Err(e) => {
                    let _ = out_tx.send(e.into());
                }
            },
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => {}
        }
    }

    queue.close();
    let _ = worker.await;
    drop(out_tx);
    let _ = writer.await;
    info!("session ended after {received} frames, {} dropped", queue.dropped());
    drop(guard);
}

/// Serves on an already bound listener until the process ends.
pub async fn serve_on(listener: TcpListener, cfg: PipelineConfig, opts: ServiceOptions) -> Result<()> {
    // fail before accepting anyone if the config cannot build a session
    Session::new(cfg.clone(), Box::new(SystemClock::new()))?;
    axum::serve(listener, router(cfg, opts)).await?;
    Ok(())
}

pub async fn serve(bind: SocketAddr, cfg: PipelineConfig, opts: ServiceOptions) -> Result<()> {
    let listener = TcpListener::bind(bind).await?;
    info!("listening on ws://{}/ws", listener.local_addr()?);
    serve_on(listener, cfg, opts).await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(i: u64) -> Job {
        Job::Frame(i, GrayImage::filled(2, 2, i as u8))
    }

    fn drain(q: &JobQueue) -> Vec<String> {
        q.close();
        std::iter::from_fn(|| q.pop())
            .map(|j| match j {
                Job::Frame(i, _) => format!("f{i}"),
                Job::Command(Command::Reset) => "reset".into(),
                Job::Command(_) => "config".into(),
            })
            .collect()
    }

    #[test]
    fn drops_oldest_frame_when_full() {
        let q = JobQueue::new(2);
        assert_eq!(q.push(frame(0)), None);
        assert_eq!(q.push(frame(1)), None);
        assert_eq!(q.push(frame(2)), Some(0));
        assert_eq!(q.push(frame(3)), Some(1));
        assert_eq!(q.dropped(), 2);
        assert_eq!(drain(&q), ["f2", "f3"]);
    }

    #[test]
    fn commands_survive_and_keep_order() {
        let q = JobQueue::new(2);
        q.push(frame(0));
        q.push(Job::Command(Command::Reset));
        q.push(frame(1));
        q.push(frame(2));
        q.push(Job::Command(Command::Reset));
        assert_eq!(drain(&q), ["reset", "f1", "f2", "reset"]);
    }

    #[test]
    fn pop_blocks_until_push() {
        let q = Arc::new(JobQueue::new(2));
        let q2 = q.clone();
        let h = std::thread::spawn(move || q2.pop().map(|j| matches!(j, Job::Frame(7, _))));
        std::thread::sleep(std::time::Duration::from_millis(20));
        q.push(frame(7));
        assert_eq!(h.join().unwrap(), Some(true));
        q.close();
        assert!(q.pop().is_none());
    }
}
