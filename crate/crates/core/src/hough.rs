//! Sobel edge points and a normal-form Hough line transform, used to recover
//! the eyebrow line above each eye.
//!
//! Lines are `rho = x·cos(theta) + y·sin(theta)` with `theta` in `[0, π)` and
//! signed `rho`. Theta bin `k` is centered on `k·π/bins`, so axis-aligned
//! lines land exactly on a bin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::imagecore::{GrayImage, Rect};
use crate::Point;

/// Edge pixels in image coordinates plus the dimensions they came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    points: Vec<(usize, usize)>,
    width: usize,
    height: usize,
}

impl EdgeMap {
    /// Validates bounds and drops duplicate points.
    pub fn new(mut points: Vec<(usize, usize)>, width: usize, height: usize) -> Result<Self> {
        if let Some(p) = points.iter().find(|&&(x, y)| x >= width || y >= height) {
            return invalid(format!("edge point {p:?} outside {width}x{height}"));
        }
        points.sort_unstable_by_key(|&(x, y)| (y, x));
        points.dedup();
        Ok(Self { points, width, height })
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Points inside `region` (border excluded) whose Sobel magnitude
/// `|Gx| + |Gy|` exceeds `threshold`.
pub fn sobel_edges(gray: &GrayImage, region: Rect, threshold: u32) -> Result<EdgeMap> {
    if region.w < 3 || region.h < 3 {
        return invalid(format!("edge region {}x{} smaller than 3x3", region.w, region.h));
    }
    if !region.fits(gray.width(), gray.height()) {
        return invalid(format!("edge region {region:?} outside image"));
    }
    let px = |x: usize, y: usize| gray.get(x, y) as i32;
    let mut points = Vec::new();
    for y in region.y + 1..region.bottom() - 1 {
        for x in region.x + 1..region.right() - 1 {
            let gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            if gx.unsigned_abs() + gy.unsigned_abs() > threshold {
                points.push((x, y));
            }
        }
    }
    EdgeMap::new(points, gray.width(), gray.height())
}

/// Vote grid indexed `[theta][rho]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoughAccumulator {
    theta_bins: usize,
    rho_bins: usize,
    rho_bin_size: f64,
    /// Rho range is `[-max_rho, max_rho]`.
    max_rho: f64,
    counts: Vec<u32>,
}

impl HoughAccumulator {
    pub fn build(edges: &EdgeMap, theta_bins: usize, rho_bin_size: f64) -> Result<Self> {
        if theta_bins < 2 {
            return invalid(format!("need at least 2 theta bins, got {theta_bins}"));
        }
        if !(rho_bin_size > 0.0) {
            return invalid(format!("rho bin size {rho_bin_size} must be positive"));
        }
        let max_rho = ((edges.width as f64).hypot(edges.height as f64)).ceil();
        let rho_bins = (2.0 * max_rho / rho_bin_size).floor() as usize + 1;
        let mut acc = Self { theta_bins, rho_bins, rho_bin_size, max_rho, counts: vec![0; theta_bins * rho_bins] };
        let trig: Vec<(f64, f64)> = (0..theta_bins).map(|k| acc.theta(k).sin_cos()).collect();
        for &(x, y) in &edges.points {
            let (x, y) = (x as f64, y as f64);
            for (k, &(sin, cos)) in trig.iter().enumerate() {
                let r = acc.rho_index(x * cos + y * sin);
                acc.counts[k * rho_bins + r] += 1;
            }
        }
        Ok(acc)
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * PI / self.theta_bins as f64
    }

    pub fn rho(&self, r: usize) -> f64 {
        r as f64 * self.rho_bin_size - self.max_rho
    }

    fn rho_index(&self, rho: f64) -> usize {
        (((rho + self.max_rho) / self.rho_bin_size).round() as usize).min(self.rho_bins - 1)
    }

    pub fn theta_bins(&self) -> usize {
        self.theta_bins
    }

    pub fn rho_bins(&self) -> usize {
        self.rho_bins
    }

    pub fn count(&self, theta_bin: usize, rho_bin: usize) -> u32 {
        self.counts[theta_bin * self.rho_bins + rho_bin]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// The 3×3 neighbourhood of a cell. Theta wraps around: the row before
    /// bin 0 is the last bin with rho negated.
    fn neighbours(&self, k: usize, r: usize) -> impl Iterator<Item = (usize, usize)> {
        let (tb, rb) = (self.theta_bins, self.rho_bins);
        [-1i64, 0, 1].into_iter().flat_map(move |dk| {
            let nk = k as i64 + dk;
            let (nk, mirror) = if nk < 0 {
                (tb - 1, true)
            } else if nk >= tb as i64 {
                (0, true)
            } else {
                (nk as usize, false)
            };
            [-1i64, 0, 1].into_iter().filter_map(move |dr| {
                if dk == 0 && dr == 0 {
                    return None;
                }
                let nr = if mirror { (rb - 1 - r) as i64 + dr } else { r as i64 + dr };
                (nr >= 0 && nr < rb as i64).then_some((nk, nr as usize))
            })
        })
    }

    /// Cells that dominate their 3×3 neighbourhood. Among equal neighbours
    /// only the first in `(theta, rho)` order survives.
    fn peaks(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for k in 0..self.theta_bins {
            for r in 0..self.rho_bins {
                let c = self.count(k, r);
                if c == 0 {
                    continue;
                }
                let dominated = self.neighbours(k, r).any(|(nk, nr)| {
                    let n = self.count(nk, nr);
                    n > c || (n == c && (nk, nr) < (k, r))
                });
                if !dominated {
                    out.push((k, r, c));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    /// Radians in `[0, π)`.
    pub theta: f64,
    pub rho: f64,
    pub support: u32,
}

impl Line {
    /// Portion of the line inside `rect` (pixel centers), if any.
    pub fn clip(&self, rect: Rect) -> Option<(Point, Point)> {
        let (sin, cos) = self.theta.sin_cos();
        let (x0, y0) = (rect.x as f64, rect.y as f64);
        let (x1, y1) = ((rect.right() - 1) as f64, (rect.bottom() - 1) as f64);
        let eps = 1e-9;
        let mut hits = Vec::new();
        if sin.abs() > eps {
            for x in [x0, x1] {
                let y = (self.rho - x * cos) / sin;
                if y >= y0 - eps && y <= y1 + eps {
                    hits.push(Point::new(x, y));
                }
            }
        }
        if cos.abs() > eps {
            for y in [y0, y1] {
                let x = (self.rho - y * sin) / cos;
                if x >= x0 - eps && x <= x1 + eps {
                    hits.push(Point::new(x, y));
                }
            }
        }
        let a = *hits.first()?;
        let b = hits.iter().copied().max_by(|p, q| a.dist(*p).total_cmp(&a.dist(*q)))?;
        Some((a, b))
    }
}

fn sort_lines(lines: &mut [Line]) {
    lines.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.rho.total_cmp(&b.rho))
    });
}

/// Up to `top_k` accumulator peaks, strongest first.
pub fn hough_lines(edges: &EdgeMap, theta_bins: usize, rho_bin_size: f64, top_k: usize) -> Result<Vec<Line>> {
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let acc = HoughAccumulator::build(edges, theta_bins, rho_bin_size)?;
    let mut lines: Vec<Line> = acc
        .peaks()
        .into_iter()
        .map(|(k, r, support)| Line { theta: acc.theta(k), rho: acc.rho(r), support })
        .collect();
    sort_lines(&mut lines);
    lines.truncate(top_k);
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoughConfig {
    pub theta_bins: usize,
    pub rho_bin_size: f64,
    pub top_k: usize,
    pub merge_theta_deg: f64,
    pub merge_rho: f64,
    pub edge_threshold: u32,
    /// Eyebrow region width as a multiple of half the inter-ocular distance.
    pub region_width: f64,
    /// Region height as a multiple of its width.
    pub region_height: f64,
    /// Gap between the eye and the region's bottom edge, in IOD units.
    pub region_gap: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            theta_bins: 180,
            rho_bin_size: 1.0,
            top_k: 8,
            merge_theta_deg: 10.0,
            merge_rho: 5.0,
            edge_threshold: 100,
            region_width: 1.2,
            region_height: 0.4,
            region_gap: 0.1,
        }
    }
}

/// Support-weighted mean of the lines close to the strongest one.
pub fn eyebrow_line_with(lines: &[Line], merge_theta_deg: f64, merge_rho: f64) -> Result<Line> {
    let mut sorted = lines.to_vec();
    sort_lines(&mut sorted);
    let top = *sorted.first().ok_or(Error::NoLine)?;
    let window = merge_theta_deg.to_radians();
    let (mut st, mut sr, mut n) = (0.0, 0.0, 0u32);
    for l in sorted
        .iter()
        .filter(|l| (l.theta - top.theta).abs() <= window + 1e-12 && (l.rho - top.rho).abs() <= merge_rho)
    {
        st += l.theta * l.support as f64;
        sr += l.rho * l.support as f64;
        n += l.support;
    }
    Ok(Line { theta: st / n as f64, rho: sr / n as f64, support: n })
}

pub fn eyebrow_line(lines: &[Line]) -> Result<Line> {
    let cfg = HoughConfig::default();
    eyebrow_line_with(lines, cfg.merge_theta_deg, cfg.merge_rho)
}

/// Search rectangle above an eye, clipped to the image.
pub fn eyebrow_region(eye: Point, iod: f64, cfg: &HoughConfig, width: usize, height: usize) -> Option<Rect> {
    let w = cfg.region_width * iod / 2.0;
    let h = cfg.region_height * w;
    let bottom = eye.y - cfg.region_gap * iod;
    let (x0, x1) = ((eye.x - w / 2.0).round().max(0.0), (eye.x + w / 2.0).round().min(width as f64));
    let (y0, y1) = ((bottom - h).round().max(0.0), bottom.round().min(height as f64));
    if x1 - x0 < 3.0 || y1 - y0 < 3.0 {
        return None;
    }
    Some(Rect { x: x0 as usize, y: y0 as usize, w: (x1 - x0) as usize, h: (y1 - y0) as usize })
}

/// Eyebrow line above `eye`, or `None` when the region is too small or has
/// no edges. The transform runs in region coordinates; the returned line is
/// in image coordinates.
pub fn detect_eyebrow(gray: &GrayImage, eye: Point, iod: f64, cfg: &HoughConfig) -> Result<Option<(Line, Rect)>> {
    let Some(region) = eyebrow_region(eye, iod, cfg, gray.width(), gray.height()) else {
        return Ok(None);
    };
    let edges = sobel_edges(gray, region, cfg.edge_threshold)?;
    let local = EdgeMap::new(
        edges.points().iter().map(|&(x, y)| (x - region.x, y - region.y)).collect(),
        region.w,
        region.h,
    )?;
    let lines = hough_lines(&local, cfg.theta_bins, cfg.rho_bin_size, cfg.top_k)?;
    if lines.is_empty() {
        return Ok(None);
    }
    let l = eyebrow_line_with(&lines, cfg.merge_theta_deg, cfg.merge_rho)?;
    let (sin, cos) = l.theta.sin_cos();
    let rho = l.rho + region.x as f64 * cos + region.y as f64 * sin;
    Ok(Some((Line { rho, ..l }, region)))
}
