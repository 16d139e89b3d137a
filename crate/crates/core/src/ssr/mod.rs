//! Six-segment rectangular (SSR) filter: candidate scan, clustering,
//! template verification and between-the-eyes selection.
//!
//! The filter is a `w`×`h` rectangle split into a 3-wide × 2-tall grid:
//!
//! ```text
//! +----+----+----+
//! | B1 | B2 | B3 |
//! +----+----+----+
//! | B4 | B5 | B6 |
//! +----+----+----+
//! ```
//!
//! A center is a candidate when the middle column (nose bridge) is brighter
//! than either side column (eyes) and the top row (eyes, brows) is darker
//! than the bottom row (cheeks, nose).

mod label;
mod template;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imagecore::{integral_image, normalize_patch, GrayImage, IntegralImage, Rect};
use crate::Point;

pub use label::{label_clusters, Cluster};
pub use template::{
    half_pixel, template_mismatch, EyeTemplatePair, Half, MismatchScore, HALF_W, PATTERN_H,
    PATTERN_W,
};

/// Filter extent. `w` is a multiple of 3 and `h` a multiple of 2, so all six
/// segments have the same pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct SsrGeometry {
    w: usize,
    h: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    w: usize,
    h: usize,
}

impl TryFrom<RawGeometry> for SsrGeometry {
    type Error = crate::Error;
    fn try_from(r: RawGeometry) -> Result<Self> {
        SsrGeometry::new(r.w, r.h)
    }
}

impl From<SsrGeometry> for RawGeometry {
    fn from(g: SsrGeometry) -> Self {
        RawGeometry { w: g.w, h: g.h }
    }
}

impl SsrGeometry {
    pub fn new(w: usize, h: usize) -> Result<Self> {
        if w < 6 || h < 4 || w % 3 != 0 || h % 2 != 0 {
            return invalid(format!(
                "SSR geometry {w}x{h} must have w>=6 divisible by 3 and h>=4 divisible by 2"
            ));
        }
        Ok(Self { w, h })
    }

    /// Geometry whose side columns center on eyes `iod` pixels apart.
    pub fn for_iod(iod: f64) -> Self {
        let w = ((1.5 * iod / 3.0).round() as usize).max(2) * 3;
        let h = ((w as f64 / 4.0).round() as usize).max(2) * 2;
        Self { w, h }
    }

    /// `self` scaled by `factor`, rounded to the nearest valid geometry.
    pub fn scaled(&self, factor: f64) -> Self {
        let w = ((self.w as f64 * factor / 3.0).round() as usize).max(2) * 3;
        let h = ((self.h as f64 * factor / 2.0).round() as usize).max(2) * 2;
        Self { w, h }
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn segment_w(&self) -> usize {
        self.w / 3
    }

    #[inline]
    pub fn segment_h(&self) -> usize {
        self.h / 2
    }

    /// Expected distance between the pupils for a face matched at this size.
    pub fn iod(&self) -> f64 {
        2.0 * self.w as f64 / 3.0
    }

    /// Top-left corner of the filter centered on `(cx, cy)`, if it fits.
    pub fn placement(&self, cx: usize, cy: usize, width: usize, height: usize) -> Option<(usize, usize)> {
        let (x0, y0) = (cx.checked_sub(self.w / 2)?, cy.checked_sub(self.h / 2)?);
        (x0 + self.w <= width && y0 + self.h <= height).then_some((x0, y0))
    }

    /// Segment rectangle `B1..=B6` (1-based, row-major) for a filter with
    /// top-left corner `(x0, y0)`.
    pub fn segment(&self, x0: usize, y0: usize, index: usize) -> Rect {
        assert!((1..=6).contains(&index));
        let (col, row) = ((index - 1) % 3, (index - 1) / 3);
        let (sw, sh) = (self.segment_w(), self.segment_h());
        Rect { x: x0 + col * sw, y: y0 + row * sh, w: sw, h: sh }
    }
}

/// Per-pixel result of the SSR scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl CandidateMask {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[inline]
fn segment_sums(ii: &IntegralImage, x0: usize, y0: usize, g: SsrGeometry) -> [u64; 6] {
    let (sw, sh) = (g.segment_w(), g.segment_h());
    let mut s = [0u64; 6];
    for (k, slot) in s.iter_mut().enumerate() {
        let (col, row) = (k % 3, k / 3);
        *slot = ii.sum_unchecked(x0 + col * sw, y0 + row * sh, sw, sh);
    }
    s
}

/// The three bright/dark relations, all strict.
#[inline]
pub fn relations_hold(s: [u64; 6]) -> bool {
    let [b1, b2, b3, b4, b5, b6] = s;
    let nose = b2 + b5;
    let right_eye_area = b1 + b4;
    let left_eye_area = b3 + b6;
    let eyes = b1 + b2 + b3;
    let cheeks = b4 + b5 + b6;
    nose > right_eye_area && nose > left_eye_area && eyes < cheeks
}

/// Evaluates the filter centered on `center`.
pub fn ssr_passes(ii: &IntegralImage, center: (usize, usize), geom: SsrGeometry) -> Result<bool> {
    let Some((x0, y0)) = geom.placement(center.0, center.1, ii.width(), ii.height()) else {
        return invalid(format!("SSR filter {geom:?} at {center:?} does not fit"));
    };
    Ok(relations_hold(segment_sums(ii, x0, y0, geom)))
}

/// Evaluates the filter at every center where it fits; all other pixels
/// are false.
pub fn scan_candidates(ii: &IntegralImage, geom: SsrGeometry) -> Result<CandidateMask> {
    let (width, height) = (ii.width(), ii.height());
    if width < geom.w || height < geom.h {
        return invalid(format!(
            "image {width}x{height} smaller than SSR filter {}x{}",
            geom.w, geom.h
        ));
    }
    let mut bits = vec![false; width * height];
    let (hw, hh) = (geom.w / 2, geom.h / 2);
    for y0 in 0..=height - geom.h {
        let cy = y0 + hh;
        for x0 in 0..=width - geom.w {
            bits[cy * width + x0 + hw] = relations_hold(segment_sums(ii, x0, y0, geom));
        }
    }
    Ok(CandidateMask { width, height, bits })
}

/// Window around a candidate, 4/3 of the filter width wide and half as tall,
/// resampled to the 32×16 reference size. `None` when it leaves the image.
pub fn extract_candidate_patch(gray: &GrayImage, center: Point, geom: SsrGeometry) -> Option<GrayImage> {
    let pw = ((geom.w as f64 * 4.0 / 3.0).round() as usize).max(2);
    let ph = (pw / 2).max(1);
    let x0 = (center.x - pw as f64 / 2.0).round();
    let y0 = (center.y - ph as f64 / 2.0).round();
    if x0 < 0.0 || y0 < 0.0 {
        return None;
    }
    let r = Rect { x: x0 as usize, y: y0 as usize, w: pw, h: ph };
    if !r.fits(gray.width(), gray.height()) {
        return None;
    }
    gray.resample_nearest(r, PATTERN_W, PATTERN_H).ok()
}

/// Center of the darkest 3×3 neighborhood inside `seg`. Ties go to the
/// window closest to the segment center, then smallest x, then smallest y.
fn darkest_window(gray: &GrayImage, seg: Rect) -> Point {
    let k = 3.min(seg.w).min(seg.h);
    let half = (k as f64 - 1.0) / 2.0;
    let seg_cx = seg.x as f64 + (seg.w as f64 - 1.0) / 2.0;
    let seg_cy = seg.y as f64 + (seg.h as f64 - 1.0) / 2.0;
    let mut best: Option<(u32, f64, usize, usize)> = None;
    for x in seg.x..=seg.right() - k {
        for y in seg.y..=seg.bottom() - k {
            let mut sum = 0u32;
            for yy in y..y + k {
                for xx in x..x + k {
                    sum += gray.get(xx, yy) as u32;
                }
            }
            let d = (x as f64 + half - seg_cx).powi(2) + (y as f64 + half - seg_cy).powi(2);
            let better = match best {
                None => true,
                Some((bs, bd, _, _)) => sum < bs || (sum == bs && d < bd),
            };
            if better {
                best = Some((sum, d, x, y));
            }
        }
    }
    let (_, _, x, y) = best.expect("segment has at least one window");
    Point::new(x as f64 + half, y as f64 + half)
}

/// Eye centers as the darkest neighborhoods of segments B1 (image left)
/// and B3 (image right) of the filter placed on `bte`.
pub fn locate_eyes(gray: &GrayImage, bte: Point, geom: SsrGeometry) -> Result<(Point, Point)> {
    if bte.x < 0.0 || bte.y < 0.0 {
        return invalid("between-the-eyes point is outside the image");
    }
    let (cx, cy) = (bte.x.round() as usize, bte.y.round() as usize);
    let Some((x0, y0)) = geom.placement(cx, cy, gray.width(), gray.height()) else {
        return invalid(format!("between-the-eyes point {bte:?} too close to the border"));
    };
    Ok((
        darkest_window(gray, geom.segment(x0, y0, 1)),
        darkest_window(gray, geom.segment(x0, y0, 3)),
    ))
}

/// Final face-anchor decision for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BteDetection {
    pub bte: Point,
    /// Eye on the image-left side (the user's right eye on a raw camera image).
    pub left_eye: Point,
    /// Eye on the image-right side.
    pub right_eye: Point,
    /// Area-weighted classification score, always positive.
    pub score: f64,
    pub scale: SsrGeometry,
    pub mismatch: f64,
    pub area: usize,
}

/// Verifies each cluster against the reference pattern and keeps the best
/// one. A cluster is face-like when `accept_threshold - (d_left + d_right)`
/// is positive; that margin is multiplied by the cluster area and the
/// largest product wins (first one on ties).
pub fn select_bte(
    clusters: &[Cluster],
    gray: &GrayImage,
    geom: SsrGeometry,
    tmpl: &EyeTemplatePair,
    accept_threshold: f64,
) -> Option<BteDetection> {
    let mut best: Option<BteDetection> = None;
    for c in clusters {
        let center = Point::new(c.centroid.0, c.centroid.1);
        let Some(patch) = extract_candidate_patch(gray, center, geom) else {
            continue;
        };
        let Ok(norm) = normalize_patch(&patch) else {
            continue;
        };
        let Ok(m) = template_mismatch(&norm, tmpl) else {
            continue;
        };
        let margin = accept_threshold - m.total();
        if !(margin > 0.0) {
            continue;
        }
        let score = margin * c.area as f64;
        if best.as_ref().is_some_and(|b| score <= b.score) {
            continue;
        }
        let Ok((left_eye, right_eye)) = locate_eyes(gray, center, geom) else {
            continue;
        };
        best = Some(BteDetection {
            bte: center,
            left_eye,
            right_eye,
            score,
            scale: geom,
            mismatch: m.total(),
            area: c.area,
        });
    }
    best
}

/// Detection plus the candidate mask of the winning scale, for overlays.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub detection: Option<BteDetection>,
    pub candidates: Option<CandidateMask>,
}

/// Runs scan → label → select at every scale and keeps the highest score.
/// Scales are visited smallest first so ties favour the smaller filter.
pub fn multiscale_scan(
    gray: &GrayImage,
    scales: &[SsrGeometry],
    tmpl: &EyeTemplatePair,
    accept_threshold: f64,
) -> Option<BteDetection> {
    multiscale_scan_with_mask(gray, scales, tmpl, accept_threshold).detection
}

pub fn multiscale_scan_with_mask(
    gray: &GrayImage,
    scales: &[SsrGeometry],
    tmpl: &EyeTemplatePair,
    accept_threshold: f64,
) -> ScanOutcome {
    let ii = integral_image(gray);
    let mut ordered = scales.to_vec();
    ordered.sort();
    ordered.dedup();
    let mut out = ScanOutcome { detection: None, candidates: None };
    for geom in ordered {
        let Ok(mask) = scan_candidates(&ii, geom) else {
            continue;
        };
        let clusters = label_clusters(&mask);
        if let Some(det) = select_bte(&clusters, gray, geom, tmpl, accept_threshold) {
            if out.detection.as_ref().map_or(true, |b| det.score > b.score) {
                out.detection = Some(det);
                out.candidates = Some(mask);
            }
        }
    }
    out
}
