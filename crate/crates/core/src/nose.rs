//! Nose-tip localization from accumulated intensity profiles, and
//! frame-to-frame tracking by normalized cross-correlation.
//!
//! The region of interest is the square hanging below the two pupils. Inside
//! it every row gets a nose-bridge point (NBP): the column window whose
//! intensity, accumulated from the top of the region down to that row, is
//! largest. The per-row increments of the NBP sums dip at the dark nostril
//! band and peak at the bright, convex tip just above it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imagecore::{ncc_search, GrayImage, Rect};
use crate::Point;

/// Square search region for the nose tip, anchored on the pupils.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoseRoi {
    pub rect: Rect,
    pub left_eye: Point,
    pub right_eye: Point,
}

/// Builds the square whose top edge joins the pupils and whose side is the
/// inter-ocular distance. When it would leave the image the side shrinks,
/// keeping the top-left anchor.
pub fn build_roi(left_eye: Point, right_eye: Point, width: usize, height: usize) -> Result<NoseRoi> {
    let iod = left_eye.dist(right_eye);
    if !(iod >= 8.0) {
        return invalid(format!("eye pair {left_eye:?}/{right_eye:?} is degenerate"));
    }
    let x = left_eye.x.min(right_eye.x).round();
    let y = ((left_eye.y + right_eye.y) / 2.0).round();
    if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
        return invalid("eye line lies outside the image");
    }
    let (x, y) = (x as usize, y as usize);
    let side = (iod.round() as usize).min(width - x).min(height - y);
    Ok(NoseRoi { rect: Rect { x, y, w: side, h: side }, left_eye, right_eye })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Accumulated intensity profile over the ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub values: Vec<f64>,
    pub axis: Axis,
}

impl Profile {
    /// First index of the maximum.
    pub fn argmax(&self) -> usize {
        argmax_first(&self.values)
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Column-indexed profile: each row of the ROI is added onto the running
/// totals of the rows above it; the final totals are returned.
pub fn horizontal_profile(gray: &GrayImage, roi: &NoseRoi) -> Profile {
    let r = roi.rect;
    let mut acc = vec![0.0; r.w];
    for y in r.y..r.bottom() {
        for (c, a) in acc.iter_mut().enumerate() {
            *a += gray.get(r.x + c, y) as f64;
        }
    }
    Profile { values: acc, axis: Axis::Horizontal }
}

/// Row-indexed counterpart of [`horizontal_profile`].
pub fn vertical_profile(gray: &GrayImage, roi: &NoseRoi) -> Profile {
    let r = roi.rect;
    let mut acc = vec![0.0; r.h];
    for x in r.x..r.right() {
        for (row, a) in acc.iter_mut().enumerate() {
            *a += gray.get(x, r.y + row) as f64;
        }
    }
    Profile { values: acc, axis: Axis::Vertical }
}

/// Brightest accumulated window on one ROI row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgePoint {
    /// Image row.
    pub row: usize,
    /// Image column of the window's first pixel.
    pub col: usize,
    pub width: usize,
    /// Window intensity accumulated from the ROI top down to `row`.
    pub sum: f64,
}

impl BridgePoint {
    pub fn center_x(&self) -> f64 {
        self.col as f64 + (self.width as f64 - 1.0) / 2.0
    }
}

pub fn default_s2_width(side: usize) -> usize {
    side.div_ceil(8).max(1)
}

/// One NBP per ROI row.
pub fn nose_bridge_points(gray: &GrayImage, roi: &NoseRoi, s2_width: usize) -> Result<Vec<BridgePoint>> {
    let r = roi.rect;
    if s2_width == 0 || s2_width >= r.w {
        return invalid(format!("sector width {s2_width} must be in 1..{}", r.w));
    }
    let mut acc = vec![0.0; r.w];
    let mut out = Vec::with_capacity(r.h);
    for y in r.y..r.bottom() {
        for (c, a) in acc.iter_mut().enumerate() {
            *a += gray.get(r.x + c, y) as f64;
        }
        let mut window: f64 = acc[..s2_width].iter().sum();
        let (mut best_c, mut best) = (0, window);
        for c in 1..=r.w - s2_width {
            window += acc[c + s2_width - 1] - acc[c - 1];
            if window > best {
                best = window;
                best_c = c;
            }
        }
        out.push(BridgePoint { row: y, col: r.x + best_c, width: s2_width, sum: best });
    }
    Ok(out)
}

/// Tip estimate in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NosePoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl NosePoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoseConfig {
    /// Sector width; `None` picks `ceil(side / 8)`.
    pub s2_width: Option<usize>,
}

impl Default for NoseConfig {
    fn default() -> Self {
        Self { s2_width: None }
    }
}

pub const FALLBACK_CONFIDENCE: f64 = 0.5;

/// Everything the localizer looked at, for overlays.
#[derive(Debug, Clone, PartialEq)]
pub struct NoseFix {
    pub tip: NosePoint,
    pub roi: NoseRoi,
    pub bridge: Vec<BridgePoint>,
    pub nostril_row: Option<usize>,
    pub fallback: bool,
}

fn box3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(v.len() - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// First index of every run of equal values whose neighbours on both sides
/// are strictly greater (`minima`) or strictly smaller. Runs touching either
/// end do not count.
fn plateau_extrema(v: &[f64], minima: bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        if j + 1 < v.len() {
            let beyond = |a: f64| if minima { a > v[i] } else { a < v[i] };
            if beyond(v[i - 1]) && beyond(v[j + 1]) {
                out.push(i);
            }
        }
        i = j + 1;
    }
    out
}

/// Locates the tip: deepest local minimum of the smoothed NBP
/// increments marks the nostrils; the largest local maximum above it
/// is the tip. Falls back to the profile maxima when that structure is
/// missing.
pub fn locate_nose_tip(gray: &GrayImage, roi: &NoseRoi, cfg: &NoseConfig) -> Result<NoseFix> {
    let r = roi.rect;
    if r.h < 5 {
        return invalid(format!("nose ROI has {} rows, need at least 5", r.h));
    }
    let s2 = cfg.s2_width.unwrap_or_else(|| default_s2_width(r.w));
    let bridge = nose_bridge_points(gray, roi, s2)?;

    let mut incr = Vec::with_capacity(bridge.len());
    let mut prev = 0.0;
    for p in &bridge {
        incr.push(p.sum - prev);
        prev = p.sum;
    }
    let s = box3(&incr);

    let minima = plateau_extrema(&s, true);
    let nostril = minima.iter().copied().fold(None, |best: Option<usize>, i| match best {
        Some(b) if s[b] <= s[i] => Some(b),
        _ => Some(i),
    });
    let tip_row = nostril.and_then(|m| {
        plateau_extrema(&s[..m], false)
            .into_iter()
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if s[b] >= s[i] => Some(b),
                _ => Some(i),
            })
    });

    if let (Some(m), Some(t)) = (nostril, tip_row) {
        let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let confidence = if hi > lo { ((s[t] - s[m]) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
        let bp = bridge[t];
        return Ok(NoseFix {
            tip: NosePoint { x: bp.center_x(), y: bp.row as f64, confidence },
            roi: *roi,
            bridge,
            nostril_row: Some(r.y + m),
            fallback: false,
        });
    }

    let x = r.x + horizontal_profile(gray, roi).argmax();
    let y = r.y + vertical_profile(gray, roi).argmax();
    Ok(NoseFix {
        tip: NosePoint { x: x as f64, y: y as f64, confidence: FALLBACK_CONFIDENCE },
        roi: *roi,
        bridge,
        nostril_row: nostril.map(|m| r.y + m),
        fallback: true,
    })
}

/// Appearance of the tip captured at lock time.
#[derive(Debug, Clone, PartialEq)]
pub struct NoseTemplate {
    pub patch: GrayImage,
    pub frame: u64,
}

impl NoseTemplate {
    /// Cuts a `side`×`side` patch (odd side) centered on `tip`.
    pub fn capture(gray: &GrayImage, tip: Point, side: usize, frame: u64) -> Result<Self> {
        if side % 2 == 0 || side == 0 {
            return invalid(format!("template side {side} must be odd"));
        }
        let half = (side / 2) as f64;
        let (x0, y0) = ((tip.x.round() - half), (tip.y.round() - half));
        if x0 < 0.0 || y0 < 0.0 {
            return invalid("nose template leaves the frame");
        }
        let r = Rect { x: x0 as usize, y: y0 as usize, w: side, h: side };
        Ok(Self { patch: gray.crop(r)?, frame })
    }

    pub fn side(&self) -> usize {
        self.patch.width()
    }
}

/// Square search window of the given side centered on `center`,
/// shifted to stay inside the frame.
pub fn search_window(gray: &GrayImage, center: Point, side: usize) -> Option<Rect> {
    let side_w = side.min(gray.width());
    let side_h = side.min(gray.height());
    Rect::centered_clamped(center.x, center.y, side_w, side_h, gray.width(), gray.height())
}

/// Correlation tracking of the tip. Confidence is the peak correlation with
/// negative values clamped to zero.
pub fn track_nose(gray: &GrayImage, tmpl: &NoseTemplate, prev: Point, search_factor: usize) -> Result<NosePoint> {
    let side = tmpl.side();
    let Some(window) = search_window(gray, prev, search_factor * side) else {
        return invalid("frame smaller than nose search window");
    };
    let m = ncc_search(gray, &tmpl.patch, window)?;
    let half = (side / 2) as f64;
    Ok(NosePoint {
        x: m.x as f64 + half,
        y: m.y as f64 + half,
        confidence: m.score.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_face, render_face_clean, FaceParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn roi_at(x: usize, y: usize, side: usize) -> NoseRoi {
        NoseRoi {
            rect: Rect { x, y, w: side, h: side },
            left_eye: Point::new(x as f64, y as f64),
            right_eye: Point::new((x + side) as f64, y as f64),
        }
    }

    #[test]
    fn roi_examples() {
        let r = build_roi(Point::new(100.0, 100.0), Point::new(160.0, 100.0), 320, 240).unwrap();
        assert_eq!(r.rect, Rect { x: 100, y: 100, w: 60, h: 60 });
        let r = build_roi(Point::new(10.0, 10.0), Point::new(20.0, 10.0), 64, 64).unwrap();
        assert_eq!(r.rect, Rect { x: 10, y: 10, w: 10, h: 10 });
        let r = build_roi(Point::new(0.0, 0.0), Point::new(200.0, 0.0), 128, 128).unwrap();
        assert_eq!(r.rect, Rect { x: 0, y: 0, w: 128, h: 128 });
        assert!(build_roi(Point::new(5.0, 5.0), Point::new(8.0, 5.0), 64, 64).is_err());
    }

    #[test]
    fn clamped_roi_is_largest_square_in_bounds() {
        // oracle: try every side from large to small, keep the first that fits
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (w, h) = (rng.gen_range(20..100), rng.gen_range(20..100));
            let lx = rng.gen_range(0..w - 1) as f64;
            let ly = rng.gen_range(0..h - 1) as f64;
            let d = rng.gen_range(8.0..120.0f64).round();
            let roi = build_roi(Point::new(lx, ly), Point::new(lx + d, ly), w, h).unwrap();
            let best = (1..=d as usize)
                .rev()
                .find(|&s| lx as usize + s <= w && ly as usize + s <= h)
                .unwrap();
            assert_eq!(roi.rect.w, best);
            assert!(roi.rect.fits(w, h));
        }
    }

    #[test]
    fn profile_examples() {
        let img = GrayImage::from_fn(20, 20, |x, _| if x == 7 { 200 } else { 20 });
        let roi = roi_at(2, 2, 12);
        assert_eq!(2 + horizontal_profile(&img, &roi).argmax(), 7);

        let flat = GrayImage::filled(20, 20, 90);
        assert_eq!(horizontal_profile(&flat, &roi).argmax(), 0);
        assert_eq!(vertical_profile(&flat, &roi).argmax(), 0);

        let (cx, cy) = (11.0, 9.0);
        let blob = GrayImage::from_fn(24, 24, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (30.0 + 200.0 * (-d2 / 8.0).exp()) as u8
        });
        let roi = roi_at(2, 2, 18);
        let hx = 2 + horizontal_profile(&blob, &roi).argmax();
        let vy = 2 + vertical_profile(&blob, &roi).argmax();
        assert!((hx as f64 - cx).abs() <= 1.0 && (vy as f64 - cy).abs() <= 1.0);
    }

    #[test]
    fn horizontal_profile_matches_two_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_fn(30, 30, |_, _| rng.gen());
        let roi = roi_at(3, 4, 20);
        let p = horizontal_profile(&img, &roi);
        for c in 0..20 {
            let mut s = 0.0;
            for r in 0..20 {
                s += img.get(3 + c, 4 + r) as f64;
            }
            assert_eq!(p.values[c], s);
        }
    }

    #[test]
    fn bridge_points_examples() {
        let stripe = GrayImage::from_fn(40, 40, |x, _| if (20..=25).contains(&x) { 220 } else { 60 });
        let roi = roi_at(5, 5, 30);
        let nbp = nose_bridge_points(&stripe, &roi, 4).unwrap();
        assert_eq!(nbp.len(), 30);
        assert!(nbp.iter().all(|p| (20..=25).contains(&p.col) && p.col + 4 <= 26));

        let one = NoseRoi { rect: Rect { x: 0, y: 0, w: 10, h: 1 }, ..roi };
        assert_eq!(nose_bridge_points(&stripe, &one, 2).unwrap().len(), 1);
        assert!(nose_bridge_points(&stripe, &roi, 30).is_err());
    }

    #[test]
    fn tilted_stripe_bridge_is_monotone() {
        let img = GrayImage::from_fn(48, 48, |x, y| {
            let c = 14.0 + y as f64 * 0.4;
            if (x as f64 - c).abs() <= 2.0 { 230 } else { 40 }
        });
        let roi = roi_at(4, 4, 40);
        let nbp = nose_bridge_points(&img, &roi, 3).unwrap();
        // oracle: recompute the best window per row from scratch
        for p in &nbp {
            let rows = p.row - 4 + 1;
            let best = (0..=40 - 3)
                .map(|c| {
                    let mut s = 0u64;
                    for r in 0..rows {
                        for k in 0..3 {
                            s += img.get(4 + c + k, 4 + r) as u64;
                        }
                    }
                    (s, c)
                })
                .fold((0u64, 0usize), |b, v| if v.0 > b.0 { v } else { b });
            assert_eq!(p.col, 4 + best.1);
        }
        assert!(nbp.windows(2).all(|w| w[1].col >= w[0].col));
    }

    #[test]
    fn finds_tip_on_synthetic_face() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for iod in [16.0, 24.0, 32.0, 48.0] {
            let p = FaceParams::new(Point::new(160.0, 100.0), iod);
            let img = render_face(320, 240, &p, &mut rng);
            let l = p.landmarks();
            let roi = build_roi(l.left_eye, l.right_eye, 320, 240).unwrap();
            let fix = locate_nose_tip(&img, &roi, &NoseConfig::default()).unwrap();
            assert!(!fix.fallback);
            assert!(fix.tip.point().max_abs_diff(l.nose_tip) <= 2.0, "iod {iod}: {:?} vs {:?}", fix.tip, l.nose_tip);
            assert!(fix.tip.confidence > 0.0 && fix.tip.confidence <= 1.0);
        }
    }

    #[test]
    fn plateau_extrema_examples() {
        assert_eq!(plateau_extrema(&[5.0, 3.0, 3.0, 4.0], true), vec![1]);
        assert_eq!(plateau_extrema(&[5.0, 3.0, 3.0, 1.0, 2.0], true), vec![3]);
        assert_eq!(plateau_extrema(&[1.0, 3.0, 2.0, 4.0, 0.0], false), vec![1, 3]);
        assert!(plateau_extrema(&[2.0, 2.0, 2.0], true).is_empty());
        assert!(plateau_extrema(&[3.0, 1.0], true).is_empty());
    }

    #[test]
    fn fallback_cases() {
        let dark = GrayImage::filled(40, 40, 0);
        let roi = roi_at(5, 5, 20);
        let fix = locate_nose_tip(&dark, &roi, &NoseConfig::default()).unwrap();
        assert!(fix.fallback);
        assert_eq!(fix.tip, NosePoint { x: 5.0, y: 5.0, confidence: 0.5 });

        // vertical bright stripe with a uniform profile down the rows
        let stripe = GrayImage::from_fn(40, 40, |x, _| if x == 15 { 200 } else { 50 });
        let fix = locate_nose_tip(&stripe, &roi, &NoseConfig::default()).unwrap();
        assert!(fix.fallback);
        assert_eq!(fix.tip.x, 15.0);

        let short = NoseRoi { rect: Rect { x: 0, y: 0, w: 10, h: 4 }, ..roi };
        assert!(locate_nose_tip(&dark, &short, &NoseConfig::default()).is_err());
    }

    #[test]
    fn tracking_examples() {
        let p = FaceParams::new(Point::new(160.0, 100.0), 32.0);
        let frame = render_face(320, 240, &p, &mut ChaCha8Rng::seed_from_u64(7));
        let tip = Point::new(160.0, 118.0);
        let tmpl = NoseTemplate::capture(&frame, tip, 15, 0).unwrap();

        let same = track_nose(&frame, &tmpl, tip, 2).unwrap();
        assert_eq!(same.point(), tip);
        assert!((same.confidence - 1.0).abs() < 1e-9);

        let shifted = GrayImage::from_fn(320, 240, |x, y| {
            if x >= 3 && y >= 2 { frame.get(x - 3, y - 2) } else { 0 }
        });
        let moved = track_nose(&shifted, &tmpl, tip, 2).unwrap();
        assert_eq!(moved.point(), Point::new(163.0, 120.0));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = GrayImage::from_fn(320, 240, |_, _| rng.gen());
        let lost = track_nose(&noise, &tmpl, tip, 2).unwrap();
        assert!(lost.confidence < 0.3, "noise confidence {}", lost.confidence);

        let tiny = GrayImage::filled(10, 10, 0);
        assert!(track_nose(&tiny, &tmpl, Point::new(5.0, 5.0), 2).is_err());
        assert!(NoseTemplate::capture(&frame, tip, 14, 0).is_err());
    }

    proptest! {
        #[test]
        fn profile_argmax_ignores_brightness_offset(seed in any::<u64>(), offset in 1u8..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(24, 24, |_, _| rng.gen_range(0..200));
            let lifted = GrayImage::from_fn(24, 24, |x, y| img.get(x, y) + offset);
            let roi = roi_at(2, 2, 20);
            prop_assert_eq!(horizontal_profile(&img, &roi).argmax(), horizontal_profile(&lifted, &roi).argmax());
            prop_assert_eq!(vertical_profile(&img, &roi).argmax(), vertical_profile(&lifted, &roi).argmax());
        }

        #[test]
        fn tip_is_translation_equivariant(dx in -6i32..6, dy in -6i32..6) {
            let base = FaceParams::new(Point::new(120.0, 90.0), 28.0);
            let moved = FaceParams::new(Point::new(120.0 + dx as f64, 90.0 + dy as f64), 28.0);
            let locate = |p: &FaceParams| {
                let img = render_face_clean(240, 200, p);
                let l = p.landmarks();
                let roi = build_roi(l.left_eye, l.right_eye, 240, 200).unwrap();
                locate_nose_tip(&img, &roi, &NoseConfig::default()).unwrap().tip
            };
            let (a, b) = (locate(&base), locate(&moved));
            prop_assert!((b.x - a.x - dx as f64).abs() < 1e-9);
            prop_assert!((b.y - a.y - dy as f64).abs() < 1e-9);
        }

        #[test]
        fn autocorrelation_is_global_max(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(60, 60, |_, _| rng.gen());
            let tip = Point::new(30.0, 30.0);
            let tmpl = NoseTemplate::capture(&img, tip, 9, 0).unwrap();
            let t = track_nose(&img, &tmpl, tip, 2).unwrap();
            prop_assert_eq!(t.point(), tip);
        }
    }
}
