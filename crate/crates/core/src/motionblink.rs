//! Frame-difference motion, blink detection gated on eye stillness,
//! debouncing, voluntary/involuntary classification, and the online open-eye
//! template used to decide when tracking has been lost.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imagecore::{ncc_search, GrayImage, Rect};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlinkConfig {
    /// Luminance change that counts as motion at a pixel.
    pub pixel_threshold: u8,
    /// Motion pixels needed for a blink, as a fraction of the eye ROI.
    pub count_fraction: f64,
    pub min_still_frames: u32,
    /// Debounce window in frames.
    pub blink_length: u32,
    pub voluntary_min_ms: f64,
    pub reinit_threshold: f64,
    /// Frames after a blink that the reopened eye must be visible.
    pub template_margin: u32,
    pub ring_capacity: usize,
    /// Per-frame displacement in pixels above which the eye counts as moving.
    pub move_eps: f64,
    /// Eye ROI size in inter-ocular distances.
    pub roi_width: f64,
    pub roi_height: f64,
    /// Eye template side in inter-ocular distances (rounded to odd, min 5).
    pub template_size: f64,
    /// Correlation search radius in pixels; `None` uses the template side.
    pub search_radius: Option<usize>,
    /// Image-right eye is the user's left eye (webcam mirroring).
    pub mirrored: bool,
}

impl Default for BlinkConfig {
    fn default() -> Self {
        Self {
            pixel_threshold: 15,
            count_fraction: 0.08,
            min_still_frames: 3,
            blink_length: 10,
            voluntary_min_ms: 250.0,
            reinit_threshold: 0.55,
            template_margin: 3,
            ring_capacity: 32,
            move_eps: 0.5,
            roi_width: 0.5,
            roi_height: 0.3,
            template_size: 0.35,
            search_radius: None,
            mirrored: true,
        }
    }
}

impl BlinkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.pixel_threshold == 0 {
            return bad("pixel_threshold must be in 1..=255");
        }
        if !(self.count_fraction > 0.0 && self.count_fraction < 1.0) {
            return bad("count_fraction must be in (0, 1)");
        }
        if self.blink_length == 0 {
            return bad("blink_length must be at least 1");
        }
        if !(self.voluntary_min_ms >= 0.0) {
            return bad("voluntary_min_ms must be non-negative");
        }
        if !(-1.0..=1.0).contains(&self.reinit_threshold) {
            return bad("reinit_threshold must be in [-1, 1]");
        }
        if self.template_margin == 0 {
            return bad("template_margin must be at least 1");
        }
        if self.ring_capacity < (self.blink_length + self.template_margin) as usize {
            return bad("ring_capacity must hold blink_length + template_margin frames");
        }
        if !(self.move_eps >= 0.0) {
            return bad("move_eps must be non-negative");
        }
        if !(self.roi_width > 0.0 && self.roi_height > 0.0 && self.template_size > 0.0) {
            return bad("eye ROI and template sizes must be positive");
        }
        Ok(())
    }

    /// Eye ROI for an eye at `eye` given the inter-ocular distance.
    pub fn eye_roi(&self, eye: Point, iod: f64, width: usize, height: usize) -> Option<Rect> {
        let w = (self.roi_width * iod).round().max(3.0) as usize;
        let h = (self.roi_height * iod).round().max(3.0) as usize;
        Rect::centered_clamped(eye.x, eye.y, w, h, width, height)
    }

    pub fn count_threshold(&self, roi: Rect) -> usize {
        (self.count_fraction * roi.area() as f64).round() as usize
    }

    pub fn template_side(&self, iod: f64) -> usize {
        let s = (self.template_size * iod).round() as usize;
        (s | 1).max(5)
    }

    /// Which user eye an image-side eye belongs to.
    pub fn user_side(&self, image_side: Side) -> Side {
        if self.mirrored {
            image_side.other()
        } else {
            image_side
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionRegion {
    pub region: Rect,
    pub pixel_threshold: u8,
    pub last_count: usize,
}

/// Pixels in the region whose luminance changed by more than the threshold.
pub fn motion_pixel_count(cur: &GrayImage, prev: &GrayImage, region: &MotionRegion) -> Result<usize> {
    if (cur.width(), cur.height()) != (prev.width(), prev.height()) {
        return invalid(format!(
            "frame size {}x{} differs from previous {}x{}",
            cur.width(),
            cur.height(),
            prev.width(),
            prev.height()
        ));
    }
    let r = region.region;
    if !r.fits(cur.width(), cur.height()) {
        return invalid(format!("motion region {r:?} outside frame"));
    }
    let w = cur.width();
    let mut n = 0;
    for y in r.y..r.bottom() {
        let a = &cur.data()[y * w + r.x..y * w + r.right()];
        let b = &prev.data()[y * w + r.x..y * w + r.right()];
        n += a.iter().zip(b).filter(|(&p, &q)| p.abs_diff(q) > region.pixel_threshold).count();
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeTrackState {
    pub position: Point,
    /// Last template correlation in `[-1, 1]`.
    pub correlation: f64,
    pub moving: bool,
    pub frames_still: u32,
}

impl EyeTrackState {
    pub fn at(position: Point) -> Self {
        Self { position, correlation: 1.0, moving: false, frames_still: 0 }
    }
}

pub fn update_eye_motion(state: EyeTrackState, displacement: Point, move_eps: f64) -> EyeTrackState {
    let moving = displacement.dist(Point::default()) > move_eps;
    EyeTrackState {
        moving,
        frames_still: if moving { 0 } else { state.frames_still.saturating_add(1) },
        ..state
    }
}

/// Raw per-frame blink signal.
pub fn detect_blink(count: usize, state: &EyeTrackState, count_threshold: usize, min_still_frames: u32) -> bool {
    count > count_threshold && !state.moving && state.frames_still >= min_still_frames
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlinkEvent {
    pub side: Side,
    pub start_frame: u64,
    pub end_frame: u64,
    pub duration_ms: f64,
    pub voluntary: bool,
    /// The other eye blinked at the same time.
    #[serde(default)]
    pub both_eyes: bool,
}

impl BlinkEvent {
    pub fn new(side: Side, start_frame: u64, end_frame: u64, frame_period_ms: f64) -> Self {
        Self {
            side,
            start_frame,
            end_frame,
            duration_ms: (end_frame - start_frame + 1) as f64 * frame_period_ms,
            voluntary: false,
            both_eyes: false,
        }
    }

    /// Natural blinks: short ones and any blink of both eyes together.
    pub fn is_involuntary(&self) -> bool {
        !self.voluntary || self.both_eyes
    }

    pub fn overlaps(&self, other: &BlinkEvent) -> bool {
        self.start_frame <= other.end_frame && other.start_frame <= self.end_frame
    }
}

/// Streaming form of [`debounce`]. Feed every frame in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Debouncer {
    window: u64,
    open: Option<(u64, u64)>,
}

impl Debouncer {
    pub fn new(blink_length: u32) -> Result<Self> {
        if blink_length == 0 {
            return invalid("blink length must be at least 1 frame");
        }
        Ok(Self { window: blink_length as u64, open: None })
    }

    /// Returns `(start, end)` of an event whose window closed at `frame`.
    pub fn push(&mut self, frame: u64, signal: bool) -> Option<(u64, u64)> {
        let mut closed = None;
        if let Some((start, last)) = self.open {
            if frame >= start + self.window {
                closed = Some((start, last));
                self.open = None;
            }
        }
        if signal {
            match &mut self.open {
                Some((_, last)) => *last = frame,
                None => self.open = Some((frame, frame)),
            }
        }
        closed
    }

    pub fn is_open(&self) -> bool {
        self.open.is_some()
    }

    pub fn open_start(&self) -> Option<u64> {
        self.open.map(|(s, _)| s)
    }

    pub fn flush(&mut self) -> Option<(u64, u64)> {
        self.open.take()
    }

    pub fn reset(&mut self) {
        self.open = None;
    }
}

/// Merges a per-frame signal stream (index = frame) into blink events.
pub fn debounce(signals: &[bool], blink_length: u32, side: Side, frame_period_ms: f64) -> Result<Vec<BlinkEvent>> {
    let mut d = Debouncer::new(blink_length)?;
    let mut out = Vec::new();
    for (f, &s) in signals.iter().enumerate() {
        if let Some((a, b)) = d.push(f as u64, s) {
            out.push(BlinkEvent::new(side, a, b, frame_period_ms));
        }
    }
    if let Some((a, b)) = d.flush() {
        out.push(BlinkEvent::new(side, a, b, frame_period_ms));
    }
    Ok(out)
}

pub fn classify_voluntary(event: BlinkEvent, voluntary_min_ms: f64) -> BlinkEvent {
    BlinkEvent { voluntary: event.duration_ms >= voluntary_min_ms, ..event }
}

/// Fixed-capacity history of recent frames.
#[derive(Debug, Clone)]
pub struct FrameRing {
    capacity: usize,
    frames: VecDeque<(u64, GrayImage)>,
}

impl FrameRing {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), frames: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, frame: u64, img: GrayImage) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back((frame, img));
    }

    pub fn get(&self, frame: u64) -> Option<&GrayImage> {
        self.frames.iter().find(|(f, _)| *f == frame).map(|(_, i)| i)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }
}

/// Open-eye appearance captured after an involuntary blink.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeTemplate {
    pub patch: GrayImage,
    /// Per-pixel variance over the post-blink frames, at least 1.
    pub variance: Vec<f64>,
    pub frame: u64,
}

impl EyeTemplate {
    pub fn side(&self) -> usize {
        self.patch.width()
    }
}

fn eye_patch_rect(eye: Point, side: usize) -> Option<Rect> {
    let half = (side / 2) as f64;
    let (x, y) = (eye.x.round() - half, eye.y.round() - half);
    (x >= 0.0 && y >= 0.0).then(|| Rect { x: x as usize, y: y as usize, w: side, h: side })
}

/// Captures the eye `margin` frames after the blink ended.
pub fn acquire_template(ring: &FrameRing, event: &BlinkEvent, eye: Point, side: usize, margin: u32) -> Result<EyeTemplate> {
    if !event.is_involuntary() {
        return invalid("templates are only taken from involuntary blinks");
    }
    if side % 2 == 0 || margin == 0 {
        return invalid(format!("template side {side} must be odd and margin {margin} positive"));
    }
    let Some(rect) = eye_patch_rect(eye, side) else {
        return invalid("eye template leaves the frame");
    };
    let frames: Vec<&GrayImage> = (1..=margin as u64)
        .map(|k| ring.get(event.end_frame + k))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::NotReady(format!("frames after {} not buffered yet", event.end_frame)))?;
    let patches = frames.iter().map(|f| f.crop(rect)).collect::<Result<Vec<_>>>()?;
    let n = patches.len() as f64;
    let variance = (0..side * side)
        .map(|i| {
            let mean = patches.iter().map(|p| p.data()[i] as f64).sum::<f64>() / n;
            let var = patches.iter().map(|p| (p.data()[i] as f64 - mean).powi(2)).sum::<f64>() / n;
            var.max(1.0)
        })
        .collect();
    Ok(EyeTemplate {
        patch: patches.last().cloned().expect("margin is positive"),
        variance,
        frame: event.end_frame + margin as u64,
    })
}

/// Best template match within `radius` of the previous position.
pub fn correlation_track(cur: &GrayImage, tmpl: &EyeTemplate, state: &EyeTrackState, radius: usize) -> Result<EyeTrackState> {
    let side = tmpl.side();
    let win = side + 2 * radius;
    let Some(window) = Rect::centered_clamped(state.position.x, state.position.y, win, win, cur.width(), cur.height())
    else {
        return invalid("frame smaller than eye search window");
    };
    let m = ncc_search(cur, &tmpl.patch, window)?;
    let half = (side / 2) as f64;
    Ok(EyeTrackState {
        position: Point::new(m.x as f64 + half, m.y as f64 + half),
        correlation: m.score,
        ..*state
    })
}
