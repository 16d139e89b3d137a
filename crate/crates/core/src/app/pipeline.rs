//! Per-session frame processing.
//!
//! Each session is either unlocked (searching for a face with the SSR scan)
//! or locked (tracking the nose tip, watching both eyes for blinks). Eye
//! positions are carried rigidly with the nose tip from the moment of lock;
//! the online eye templates only serve to notice that tracking was lost.

use std::collections::VecDeque;
use std::path::Path;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::events::{Event, EventRecord, EventSink};
use super::fps::{Clock, FpsMeter};
use super::overlay::render_overlay;
use super::source::SourceFrame;
use crate::error::{Error, Result};
use crate::hough::{detect_eyebrow, Line};
use crate::imagecore::{GrayImage, Rect};
use crate::motionblink::{
    acquire_template, classify_voluntary, correlation_track, detect_blink, motion_pixel_count, update_eye_motion,
    BlinkEvent, Debouncer, EyeTemplate, EyeTrackState, FrameRing, MotionRegion, Side,
};
use crate::nose::{build_roi, locate_nose_tip, track_nose, NoseConfig, NoseFix, NosePoint, NoseTemplate};
use crate::pointer::{blink_to_click, Pointer, PointerState};
use crate::ssr::{multiscale_scan_with_mask, BteDetection, CandidateMask, EyeTemplatePair, SsrGeometry};
use crate::Point;

const SIDES: [Side; 2] = [Side::Left, Side::Right];

/// What the pipeline saw on one frame, for overlays and live clients.
/// Eye arrays are indexed by image side: 0 = image-left, 1 = image-right.
#[derive(Debug, Clone, Default)]
pub struct FrameDebug {
    pub frame: u64,
    pub candidates: Option<CandidateMask>,
    pub detection: Option<BteDetection>,
    pub nose_fix: Option<NoseFix>,
    pub nose: Option<NosePoint>,
    pub eyes: Option<[Point; 2]>,
    pub eye_rois: Vec<Rect>,
    pub eyebrows: Vec<(Line, Rect)>,
    /// Image sides with a raw blink signal on this frame.
    pub blinking: Vec<Side>,
    pub pointer: Option<PointerState>,
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub events: Vec<EventRecord>,
    pub debug: FrameDebug,
}

struct Locked {
    detection: BteDetection,
    iod: f64,
    nose_tmpl: NoseTemplate,
    nose: NosePoint,
    /// Eye minus nose tip at lock time.
    offsets: [Point; 2],
    eyes: [EyeTrackState; 2],
    debouncers: [Debouncer; 2],
    last_closed: [Option<BlinkEvent>; 2],
    templates: [Option<EyeTemplate>; 2],
    pending: Vec<(usize, BlinkEvent)>,
    low_corr: [u32; 2],
    lost: u32,
    eye_history: VecDeque<(u64, [Point; 2])>,
}

impl Locked {
    fn eye_positions(&self) -> [Point; 2] {
        let n = self.nose.point();
        [n + self.offsets[0], n + self.offsets[1]]
    }
}

pub struct Session {
    cfg: PipelineConfig,
    scales: Vec<SsrGeometry>,
    eye_pair: EyeTemplatePair,
    locked: Option<Locked>,
    pointer: Pointer,
    prev: Option<GrayImage>,
    ring: FrameRing,
    fps: FpsMeter,
    run_fps: FpsMeter,
    clock: Box<dyn Clock>,
    frames: u64,
}

impl Session {
    pub fn new(cfg: PipelineConfig, clock: Box<dyn Clock>) -> Result<Self> {
        cfg.validate()?;
        let eye_pair = cfg.eye_template()?;
        Ok(Self {
            scales: cfg.scales(),
            eye_pair,
            locked: None,
            pointer: Pointer::new(cfg.pointer),
            prev: None,
            ring: FrameRing::new(cfg.blink.ring_capacity),
            fps: FpsMeter::new(cfg.fps_window),
            run_fps: FpsMeter::new(usize::MAX),
            clock,
            frames: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Forgets the face, the calibration and all templates.
    pub fn reset(&mut self) {
        self.locked = None;
        self.pointer.reset();
        self.prev = None;
        self.ring.clear();
    }

    /// Replaces the configuration and resets the session.
    pub fn set_config(&mut self, cfg: PipelineConfig) -> Result<()> {
        cfg.validate()?;
        self.eye_pair = cfg.eye_template()?;
        self.scales = cfg.scales();
        self.pointer = Pointer::new(cfg.pointer);
        self.ring = FrameRing::new(cfg.blink.ring_capacity);
        self.fps = FpsMeter::new(cfg.fps_window);
        self.cfg = cfg;
        self.reset();
        Ok(())
    }

    pub fn is_locked(&self) -> bool {
        self.locked.is_some()
    }

    pub fn calibrated(&self) -> bool {
        self.pointer.calibration().is_some()
    }

    pub fn pointer(&self) -> Option<PointerState> {
        self.calibrated().then(|| self.pointer.state())
    }

    pub fn fps(&self) -> Option<f64> {
        self.fps.fps().ok()
    }

    /// Frame rate over every frame processed so far.
    pub fn overall_fps(&self) -> Option<f64> {
        self.run_fps.fps().ok()
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    pub fn process(&mut self, frame: u64, img: &GrayImage) -> FrameOutput {
        let mut events = Vec::new();
        let mut dbg = FrameDebug { frame, ..Default::default() };

        let size_changed = self
            .prev
            .as_ref()
            .is_some_and(|p| (p.width(), p.height()) != (img.width(), img.height()));
        if size_changed {
            self.prev = None;
            self.ring.clear();
            if self.locked.take().is_some() {
                events.push(Event::Reinit { reason: "frame-size".into() });
            }
        }
        self.ring.push(frame, img.clone());

        if self.locked.is_some() {
            self.track(frame, img, &mut events, &mut dbg);
        } else {
            self.acquire(frame, img, &mut events, &mut dbg);
        }

        if self.cfg.eyebrows {
            if let Some(l) = &self.locked {
                for eye in l.eye_positions() {
                    if let Ok(Some(found)) = detect_eyebrow(img, eye, l.iod, &self.cfg.hough) {
                        dbg.eyebrows.push(found);
                    }
                }
            }
        }

        self.prev = Some(img.clone());
        self.frames += 1;
        let now = self.clock.now();
        self.fps.record(now);
        self.run_fps.record(now);
        if self.frames % self.cfg.metrics_interval == 0 {
            if let Ok(fps) = self.fps.fps() {
                events.push(Event::Metrics { fps });
            }
        }
        dbg.pointer = self.pointer();
        FrameOutput { events: events.into_iter().map(|e| EventRecord::new(frame, e)).collect(), debug: dbg }
    }

    fn acquire(&mut self, frame: u64, img: &GrayImage, events: &mut Vec<Event>, dbg: &mut FrameDebug) {
        let out = multiscale_scan_with_mask(img, &self.scales, &self.eye_pair, self.cfg.detection.accept_threshold);
        dbg.candidates = out.candidates;
        dbg.detection = out.detection.clone();
        let Some(det) = out.detection else {
            return;
        };
        let Ok(roi) = build_roi(det.left_eye, det.right_eye, img.width(), img.height()) else {
            debug!("frame {frame}: face found but nose ROI is degenerate");
            return;
        };
        let Ok(fix) = locate_nose_tip(img, &roi, &NoseConfig { s2_width: self.cfg.nose.s2_width }) else {
            return;
        };
        let Ok(nose_tmpl) = NoseTemplate::capture(img, fix.tip.point(), self.cfg.nose.template_size, frame) else {
            debug!("frame {frame}: nose template would leave the frame");
            return;
        };
        let center = Point::new(fix.tip.x.round(), fix.tip.y.round());
        let iod = det.left_eye.dist(det.right_eye);
        let offsets = [det.left_eye - center, det.right_eye - center];
        let debouncer = Debouncer::new(self.cfg.blink.blink_length).expect("validated blink length");

        events.push(Event::Face {
            bte: det.bte,
            left_eye: det.left_eye,
            right_eye: det.right_eye,
            scale_w: det.scale.w(),
            scale_h: det.scale.h(),
            score: det.score,
        });
        events.push(Event::Nose { x: fix.tip.x, y: fix.tip.y, confidence: fix.tip.confidence, tracked: false });
        if self.calibrated() {
            if let Ok(p) = self.pointer.update(center) {
                events.push(Event::Pointer { x: p.x, y: p.y });
            }
        } else {
            self.pointer.calibrate(center);
            let p = self.pointer.state();
            events.push(Event::Pointer { x: p.x, y: p.y });
        }

        let locked = Locked {
            detection: det.clone(),
            iod,
            nose_tmpl,
            nose: NosePoint { x: center.x, y: center.y, confidence: fix.tip.confidence },
            offsets,
            eyes: [EyeTrackState::at(det.left_eye), EyeTrackState::at(det.right_eye)],
            debouncers: [debouncer.clone(), debouncer],
            last_closed: [None, None],
            templates: [None, None],
            pending: Vec::new(),
            low_corr: [0, 0],
            lost: 0,
            eye_history: VecDeque::from([(frame, [det.left_eye, det.right_eye])]),
        };
        dbg.nose = Some(fix.tip);
        dbg.eyes = Some([det.left_eye, det.right_eye]);
        dbg.nose_fix = Some(fix);
        self.locked = Some(locked);
    }

    fn unlock(&mut self, reason: &str, events: &mut Vec<Event>) {
        debug!("tracking lost ({reason})");
        self.locked = None;
        events.push(Event::Reinit { reason: reason.into() });
    }

    fn track(&mut self, frame: u64, img: &GrayImage, events: &mut Vec<Event>, dbg: &mut FrameDebug) {
        let cfg = &self.cfg;
        let l = self.locked.as_mut().expect("track runs only when locked");
        let prev_tip = l.nose.point();

        let Ok(found) = track_nose(img, &l.nose_tmpl, prev_tip, cfg.nose.search_factor) else {
            self.unlock("nose", events);
            return;
        };
        if found.confidence < cfg.nose.min_confidence {
            l.lost += 1;
            l.nose.confidence = found.confidence;
        } else {
            l.lost = 0;
            l.nose = found;
        }
        if l.lost >= cfg.nose.lost_frames {
            self.unlock("nose", events);
            return;
        }
        let nose = l.nose;
        events.push(Event::Nose { x: nose.x, y: nose.y, confidence: nose.confidence, tracked: true });
        if let Ok(p) = self.pointer.update(nose.point()) {
            events.push(Event::Pointer { x: p.x, y: p.y });
        }

        let displacement = nose.point() - prev_tip;
        let eyes = l.eye_positions();
        l.eye_history.push_back((frame, eyes));
        while l.eye_history.len() > cfg.blink.ring_capacity {
            l.eye_history.pop_front();
        }
        dbg.nose = Some(nose);
        dbg.eyes = Some(eyes);

        // raw blink signals and debounce
        let period = cfg.frame_period_ms();
        let mut closed: [Option<BlinkEvent>; 2] = [None, None];
        for i in 0..2 {
            let mut st = update_eye_motion(l.eyes[i], displacement, cfg.blink.move_eps);
            st.position = eyes[i];
            let roi = cfg.blink.eye_roi(eyes[i], l.iod, img.width(), img.height());
            let signal = match (roi, &self.prev) {
                (Some(r), Some(prev)) => {
                    dbg.eye_rois.push(r);
                    let region = MotionRegion { region: r, pixel_threshold: cfg.blink.pixel_threshold, last_count: 0 };
                    let n = motion_pixel_count(img, prev, &region).unwrap_or(0);
                    detect_blink(n, &st, cfg.blink.count_threshold(r), cfg.blink.min_still_frames)
                }
                _ => false,
            };
            if signal {
                dbg.blinking.push(SIDES[i]);
            }
            l.eyes[i] = st;
            if let Some((a, b)) = l.debouncers[i].push(frame, signal) {
                let ev = BlinkEvent::new(cfg.blink.user_side(SIDES[i]), a, b, period);
                closed[i] = Some(classify_voluntary(ev, cfg.blink.voluntary_min_ms));
            }
        }
        for i in 0..2 {
            let Some(mut ev) = closed[i] else { continue };
            let o = 1 - i;
            ev.both_eyes = closed[o].is_some_and(|e| e.overlaps(&ev))
                || l.last_closed[o].is_some_and(|e| e.overlaps(&ev))
                || l.debouncers[o].open_start().is_some_and(|s| s <= ev.end_frame);
            closed[i] = Some(ev);
        }
        for i in 0..2 {
            let Some(ev) = closed[i] else { continue };
            l.last_closed[i] = Some(ev);
            events.push(Event::Blink(ev));
            if let Some(click) = blink_to_click(&ev, frame) {
                events.push(Event::Click { button: click.button });
            }
            if ev.is_involuntary() && l.templates[i].is_none() && !l.pending.iter().any(|(s, _)| *s == i) {
                l.pending.push((i, ev));
            }
        }

        // online eye templates, taken once the reopened eye has been seen
        let margin = cfg.blink.template_margin;
        let mut still_pending = Vec::new();
        for (i, ev) in std::mem::take(&mut l.pending) {
            let target = ev.end_frame + margin as u64;
            if frame < target {
                still_pending.push((i, ev));
                continue;
            }
            let Some(&(_, pos)) = l.eye_history.iter().find(|(f, _)| *f == target) else {
                continue;
            };
            let side_px = cfg.blink.template_side(l.iod);
            match acquire_template(&self.ring, &ev, pos[i], side_px, margin) {
                Ok(t) => {
                    events.push(Event::Template { side: ev.side, source_frame: t.frame });
                    l.templates[i] = Some(t);
                    l.low_corr[i] = 0;
                }
                Err(Error::NotReady(_)) if frame < target + cfg.blink.ring_capacity as u64 => still_pending.push((i, ev)),
                Err(e) => debug!("frame {frame}: eye template not taken: {e}"),
            }
        }
        l.pending = still_pending;

        // re-initialization when an eye no longer looks like its template
        let mut lost_eye = false;
        for i in 0..2 {
            let Some(t) = &l.templates[i] else { continue };
            if t.frame >= frame {
                continue;
            }
            let radius = cfg.blink.search_radius.unwrap_or(t.side());
            let corr = correlation_track(img, t, &l.eyes[i], radius).map_or(-1.0, |s| s.correlation);
            l.eyes[i].correlation = corr;
            if corr < cfg.blink.reinit_threshold {
                l.low_corr[i] += 1;
            } else {
                l.low_corr[i] = 0;
            }
            lost_eye |= l.low_corr[i] > cfg.blink.blink_length;
        }
        if lost_eye {
            self.unlock("eye", events);
        }
    }

    /// Current face detection, if locked.
    pub fn detection(&self) -> Option<&BteDetection> {
        self.locked.as_ref().map(|l| &l.detection)
    }

    /// Current eye positions (image-left, image-right), if locked.
    pub fn eyes(&self) -> Option<[Point; 2]> {
        self.locked.as_ref().map(|l| l.eye_positions())
    }

    pub fn nose(&self) -> Option<NosePoint> {
        self.locked.as_ref().map(|l| l.nose)
    }
}

/// Totals for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: u64,
    pub skipped: u64,
    pub events: u64,
    pub blinks: u64,
    pub clicks: u64,
    pub reinits: u64,
    pub fps: Option<f64>,
}

/// Feeds every frame of `source` through `session`, writing events to
/// `sink` and, when `overlay_dir` is set, one PNG per processed frame.
pub fn run_pipeline(
    source: impl IntoIterator<Item = SourceFrame>,
    session: &mut Session,
    sink: &mut dyn EventSink,
    overlay_dir: Option<&Path>,
) -> Result<RunSummary> {
    let mut sum = RunSummary::default();
    if let Some(dir) = overlay_dir {
        std::fs::create_dir_all(dir)?;
    }
    for (idx, path, img) in source {
        let img = match img {
            Ok(i) => i,
            Err(e) => {
                warn!("skipping frame {idx} ({}): {e}", path.display());
                sum.skipped += 1;
                continue;
            }
        };
        let out = session.process(idx, &img);
        sum.frames += 1;
        for r in &out.events {
            sink.emit(r)?;
            sum.events += 1;
            match r.event {
                Event::Blink(_) => sum.blinks += 1,
                Event::Click { .. } => sum.clicks += 1,
                Event::Reinit { .. } => sum.reinits += 1,
                _ => {}
            }
        }
        if let Some(dir) = overlay_dir {
            render_overlay(&img, &out.debug).save_png(&dir.join(format!("{idx:06}.png")))?;
        }
    }
    sink.flush()?;
    sum.fps = session.overall_fps();
    Ok(sum)
}
