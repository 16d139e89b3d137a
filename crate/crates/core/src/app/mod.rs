//! Application layer: configuration, the per-frame session, the event log,
//! frame sources, debug overlays and the WebSocket service.

pub mod config;
pub mod events;
pub mod fixtures;
pub mod fps;
pub mod overlay;
pub mod pipeline;
pub mod service;
pub mod source;
pub mod wire;

pub use config::PipelineConfig;
pub use events::{parse_log, Event, EventRecord, EventSink, JsonlSink};
pub use fps::{Clock, FakeClock, FpsMeter, SystemClock};
pub use pipeline::{run_pipeline, FrameOutput, RunSummary, Session};
pub use source::DirectorySource;
