//! Clocks and the rolling frame-rate meter.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub trait Clock: Send {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Manually advanced clock. Clones share the same time.
#[derive(Clone, Default)]
pub struct FakeClock {
    nanos: Arc<AtomicU64>,
    /// Added automatically on every `now()` call.
    step: Duration,
}

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// A clock that moves forward by `step` each time it is read.
    pub fn ticking(step: Duration) -> Self {
        Self { nanos: Arc::default(), step }
    }

    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        let n = self.nanos.fetch_add(self.step.as_nanos() as u64, Ordering::SeqCst);
        Duration::from_nanos(n)
    }
}

/// Frames per second over the last `window` frame intervals.
#[derive(Debug, Clone)]
pub struct FpsMeter {
    window: usize,
    stamps: VecDeque<Duration>,
}

impl FpsMeter {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), stamps: VecDeque::new() }
    }

    /// Records the completion time of one frame.
    pub fn record(&mut self, t: Duration) {
        if self.stamps.len() > self.window {
            self.stamps.pop_front();
        }
        self.stamps.push_back(t);
    }

    pub fn fps(&self) -> Result<f64> {
        if self.stamps.len() < 2 {
            return Err(Error::NotReady("need at least two frames".into()));
        }
        let span = (*self.stamps.back().unwrap() - *self.stamps.front().unwrap()).as_secs_f64();
        if span <= 0.0 {
            return Err(Error::NotReady("no time has elapsed".into()));
        }
        Ok((self.stamps.len() - 1) as f64 / span)
    }

    pub fn reset(&mut self) {
        self.stamps.clear();
    }
}
