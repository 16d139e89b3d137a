//! 8-connected labeling of the candidate mask.

use super::CandidateMask;

/// One connected group of candidate pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
    pub centroid: (f64, f64),
}

impl Cluster {
    fn from_pixels(pixels: Vec<(usize, usize)>) -> Self {
        let area = pixels.len();
        let (sx, sy) = pixels
            .iter()
            .fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x as f64, ay + y as f64));
        Cluster { centroid: (sx / area as f64, sy / area as f64), area, pixels }
    }

    /// Inclusive bounding box `(min_x, min_y, max_x, max_y)`.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        self.pixels.iter().fold(
            (usize::MAX, usize::MAX, 0, 0),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        )
    }
}

/// Partitions the true pixels of `mask` into maximal 8-connected components,
/// ordered by the raster position of each component's first pixel.
pub fn label_clusters(mask: &CandidateMask) -> Vec<Cluster> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut clusters = Vec::new();
    let mut stack = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            let i0 = y0 * w + x0;
            if !mask.bits[i0] || seen[i0] {
                continue;
            }
            seen[i0] = true;
            stack.push((x0, y0));
            let mut pixels = Vec::new();
            while let Some((x, y)) = stack.pop() {
                pixels.push((x, y));
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let i = ny * w + nx;
                        if mask.bits[i] && !seen[i] {
                            seen[i] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(x, y)| (y, x));
            clusters.push(Cluster::from_pixels(pixels));
        }
    }
    clusters
}
