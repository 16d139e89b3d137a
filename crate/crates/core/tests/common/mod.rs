#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use facemouse::app::fixtures::SessionScript;
use facemouse::app::{run_pipeline, DirectorySource, Event, EventRecord, FakeClock, JsonlSink, PipelineConfig, Session};
use facemouse::imagecore::encode_pgm;

pub const SEED: u64 = 7;

pub fn write_frames(script: &SessionScript, seed: u64, dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, img) in script.render(seed).iter().enumerate() {
        std::fs::write(dir.join(format!("frame_{i:04}.pgm")), encode_pgm(img)).unwrap();
    }
}

pub fn fake_session(cfg: PipelineConfig) -> Session {
    Session::new(cfg, Box::new(FakeClock::ticking(Duration::from_millis(33)))).unwrap()
}

/// Runs a frame directory with a fake clock and returns the raw log text.
pub fn run_dir(dir: &Path, cfg: PipelineConfig) -> String {
    let mut session = fake_session(cfg);
    let mut sink = JsonlSink::new(Vec::new());
    run_pipeline(DirectorySource::open(dir).unwrap(), &mut session, &mut sink, None).unwrap();
    String::from_utf8(sink.into_inner()).unwrap()
}

pub fn without_metrics(records: &[EventRecord]) -> Vec<EventRecord> {
    records.iter().filter(|r| !matches!(r.event, Event::Metrics { .. })).cloned().collect()
}
