//! Virtual pointer driven by nose displacement, and clicks from blinks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motionblink::{BlinkEvent, Side};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Pointer offset from screen center follows nose offset from origin.
    Absolute,
    /// Pointer moves by the frame-to-frame nose displacement.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointerConfig {
    pub screen_w: u32,
    pub screen_h: u32,
    pub gain: f64,
    pub mode: Mode,
    /// Negate horizontal motion (webcam images are mirrored).
    pub mirror_x: bool,
    /// Absolute mode: per-axis nose offsets up to this many pixels are ignored.
    pub dead_zone: f64,
    /// Weight of the previous smoothed nose position, in `[0, 1)`.
    pub smoothing: f64,
}

impl Default for PointerConfig {
    fn default() -> Self {
        Self {
            screen_w: 1280,
            screen_h: 720,
            gain: 4.0,
            mode: Mode::Absolute,
            mirror_x: true,
            dead_zone: 2.0,
            smoothing: 0.5,
        }
    }
}

impl PointerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.screen_w == 0 || self.screen_h == 0 {
            return Err(Error::Config("screen size must be positive".into()));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Config("gain must be positive".into()));
        }
        if !(self.dead_zone >= 0.0) {
            return Err(Error::Config("dead_zone must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::Config("smoothing must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn center(&self) -> Point {
        Point::new((self.screen_w / 2) as f64, (self.screen_h / 2) as f64)
    }

    fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(0.0, (self.screen_w - 1) as f64),
            p.y.clamp(0.0, (self.screen_h - 1) as f64),
        )
    }

    fn directed(&self, d: Point) -> Point {
        if self.mirror_x {
            Point::new(-d.x, d.y)
        } else {
            d
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub origin: Point,
    pub screen_center: Point,
}

pub fn calibrate(nose: Point, cfg: &PointerConfig) -> Calibration {
    Calibration { origin: nose, screen_center: cfg.center() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerState {
    pub x: f64,
    pub y: f64,
}

impl PointerState {
    pub fn centered(cfg: &PointerConfig) -> Self {
        let c = cfg.center();
        Self { x: c.x, y: c.y }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Maps a nose position to the pointer. `prev_nose` is only used in
/// relative mode.
pub fn update_pointer(
    state: &PointerState,
    cal: Option<&Calibration>,
    nose: Point,
    prev_nose: Point,
    cfg: &PointerConfig,
) -> Result<PointerState> {
    let cal = cal.ok_or(Error::NotCalibrated)?;
    let p = match cfg.mode {
        Mode::Absolute => {
            let d = nose - cal.origin;
            let dz = |v: f64| if v.abs() <= cfg.dead_zone { 0.0 } else { v };
            let d = cfg.directed(Point::new(dz(d.x), dz(d.y)));
            Point::new(cal.screen_center.x + cfg.gain * d.x, cal.screen_center.y + cfg.gain * d.y)
        }
        Mode::Relative => {
            let d = cfg.directed(nose - prev_nose);
            Point::new(state.x + cfg.gain * d.x, state.y + cfg.gain * d.y)
        }
    };
    let p = cfg.clamp(p);
    Ok(PointerState { x: p.x, y: p.y })
}

/// Session-owned pointer: smoothing, calibration and the last position.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointer {
    cfg: PointerConfig,
    cal: Option<Calibration>,
    state: PointerState,
    smoothed: Option<Point>,
}

impl Pointer {
    pub fn new(cfg: PointerConfig) -> Self {
        Self { cfg, cal: None, state: PointerState::centered(&cfg), smoothed: None }
    }

    pub fn config(&self) -> &PointerConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> Option<&Calibration> {
        self.cal.as_ref()
    }

    pub fn state(&self) -> PointerState {
        self.state
    }

    /// Sets the origin at `nose` and recenters the pointer.
    pub fn calibrate(&mut self, nose: Point) {
        self.cal = Some(calibrate(nose, &self.cfg));
        self.state = PointerState::centered(&self.cfg);
        self.smoothed = Some(nose);
    }

    pub fn reset(&mut self) {
        self.cal = None;
        self.smoothed = None;
        self.state = PointerState::centered(&self.cfg);
    }

    pub fn update(&mut self, nose: Point) -> Result<PointerState> {
        let prev = self.smoothed.unwrap_or(nose);
        let a = self.cfg.smoothing;
        let s = Point::new(a * prev.x + (1.0 - a) * nose.x, a * prev.y + (1.0 - a) * nose.y);
        let next = update_pointer(&self.state, self.cal.as_ref(), s, prev, &self.cfg)?;
        self.smoothed = Some(s);
        self.state = next;
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Button {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub button: Button,
    pub frame: u64,
}

/// Voluntary single-eye blinks click the button on the same side.
pub fn blink_to_click(event: &BlinkEvent, frame: u64) -> Option<ClickEvent> {
    if event.is_involuntary() {
        return None;
    }
    let button = match event.side {
        Side::Left => Button::Left,
        Side::Right => Button::Right,
    };
    Some(ClickEvent { button, frame })
}
