//! Pixel-buffer primitives shared by every detector: grayscale buffers,
//! summed-area tables, rectangle sums, patch normalization and a small
//! normalized cross-correlation matcher.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major 8-bit luminance image.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("image dimensions must be positive, got {width}x{height}"));
        }
        if data.len() != width * height {
            return invalid(format!(
                "buffer length {} does not match {width}x{height}",
                data.len()
            ));
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a single value.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0);
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn bounds(&self) -> Rect {
        Rect { x: 0, y: 0, w: self.width, h: self.height }
    }

    pub fn crop(&self, r: Rect) -> Result<GrayImage> {
        if !r.fits(self.width, self.height) {
            return invalid(format!("crop {r:?} outside {}x{}", self.width, self.height));
        }
        Ok(GrayImage::from_fn(r.w, r.h, |x, y| self.get(r.x + x, r.y + y)))
    }

    /// Nearest-neighbor resample of `src` (a sub-rectangle) to `out_w`×`out_h`.
    pub fn resample_nearest(&self, src: Rect, out_w: usize, out_h: usize) -> Result<GrayImage> {
        if !src.fits(self.width, self.height) {
            return invalid(format!("resample source {src:?} outside image"));
        }
        if out_w == 0 || out_h == 0 {
            return invalid("resample target must be non-empty");
        }
        Ok(GrayImage::from_fn(out_w, out_h, |x, y| {
            let sx = src.x + ((2 * x + 1) * src.w) / (2 * out_w);
            let sy = src.y + ((2 * y + 1) * src.h) / (2 * out_h);
            self.get(sx.min(src.x + src.w - 1), sy.min(src.y + src.h - 1))
        }))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Axis-aligned rectangle in pixel units; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return invalid(format!("rect extent must be positive, got {w}x{h}"));
        }
        Ok(Self { x, y, w, h })
    }

    #[inline]
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x + self.w <= width && self.y + self.h <= height
    }

    #[inline]
    pub fn right(&self) -> usize {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    /// Rectangle of size `w`×`h` centered on `(cx, cy)`, shifted to lie inside
    /// `width`×`height`. Returns `None` when it cannot fit at all.
    pub fn centered_clamped(
        cx: f64,
        cy: f64,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    ) -> Option<Rect> {
        if w == 0 || h == 0 || w > width || h > height {
            return None;
        }
        let x0 = (cx - (w as f64 - 1.0) / 2.0).round();
        let y0 = (cy - (h as f64 - 1.0) / 2.0).round();
        let x = x0.clamp(0.0, (width - w) as f64) as usize;
        let y = y0.clamp(0.0, (height - h) as f64) as usize;
        Some(Rect { x, y, w, h })
    }
}

/// Summed-area table; entry `(x, y)` holds the sum of all source pixels with
/// `x' <= x` and `y' <= y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    data: Vec<u64>,
}

impl IntegralImage {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Table lookup; negative coordinates read as zero.
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> u64 {
        if x < 0 || y < 0 {
            0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    pub fn total(&self) -> u64 {
        *self.data.last().expect("integral image is never empty")
    }

    /// Four-corner rectangle sum without bounds validation. Caller guarantees
    /// the rectangle lies inside the image.
    #[inline]
    pub fn sum_unchecked(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let (x0, y0) = (x as isize - 1, y as isize - 1);
        let (x1, y1) = ((x + w) as isize - 1, (y + h) as isize - 1);
        (self.at(x1, y1) + self.at(x0, y0)) - (self.at(x0, y1) + self.at(x1, y0))
    }
}

/// Packed 8-bit RGB to BT.601 luma.
pub fn to_grayscale(rgb: &[u8], width: usize, height: usize) -> Result<GrayImage> {
    if rgb.len() != 3 * width * height {
        return invalid(format!(
            "rgb buffer length {} does not match 3x{width}x{height}",
            rgb.len()
        ));
    }
    let data = rgb
        .chunks_exact(3)
        .map(|p| {
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(width, height, data)
}

/// Builds the summed-area table in one pass using a running column sum
/// `s(x, y) = s(x, y-1) + i(x, y)` and `ii(x, y) = ii(x-1, y) + s(x, y)`.
pub fn integral_image(img: &GrayImage) -> IntegralImage {
    let (w, h) = (img.width, img.height);
    debug_assert!((w as u128) * (h as u128) * 255 <= u64::MAX as u128);
    let mut data = vec![0u64; w * h];
    let mut col_sum = vec![0u64; w];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        let mut left = 0u64;
        for x in 0..w {
            col_sum[x] += row[x] as u64;
            left += col_sum[x];
            data[y * w + x] = left;
        }
    }
    IntegralImage { width: w, height: h, data }
}

/// Sum of the source pixels inside `r` using four table reads.
pub fn rect_sum(ii: &IntegralImage, r: Rect) -> Result<u64> {
    if !r.fits(ii.width, ii.height) {
        return invalid(format!("rect {r:?} outside {}x{}", ii.width, ii.height));
    }
    Ok(ii.sum_unchecked(r.x, r.y, r.w, r.h))
}

/// Real-valued patch with mean 128 and population standard deviation 64.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPatch {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

pub const NORMALIZED_MEAN: f64 = 128.0;
pub const NORMALIZED_STD: f64 = 64.0;

/// Affine remap of `values` to mean 128 / std 64.
pub fn normalize_values(width: usize, height: usize, values: &[f64]) -> Result<NormalizedPatch> {
    if values.len() != width * height {
        return invalid("patch buffer does not match its dimensions");
    }
    if values.len() < 2 {
        return invalid("normalization needs at least two pixels");
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12) {
        return Err(Error::DegeneratePatch);
    }
    let k = NORMALIZED_STD / std;
    let data = values.iter().map(|v| (v - mean) * k + NORMALIZED_MEAN).collect();
    Ok(NormalizedPatch { width, height, data })
}

pub fn normalize_patch(patch: &GrayImage) -> Result<NormalizedPatch> {
    let values: Vec<f64> = patch.data.iter().map(|&v| v as f64).collect();
    normalize_values(patch.width, patch.height, &values)
}

/// Result of a normalized cross-correlation search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccMatch {
    /// Top-left corner of the best window.
    pub x: usize,
    pub y: usize,
    /// Pearson correlation in `[-1, 1]`; zero when either side is flat.
    pub score: f64,
}

/// Slides `template` over every placement fully inside `search` and returns
/// the window with the highest normalized cross-correlation. Ties keep the
/// first placement in raster order.
pub fn ncc_search(image: &GrayImage, template: &GrayImage, search: Rect) -> Result<NccMatch> {
    if !search.fits(image.width, image.height) {
        return invalid(format!("search region {search:?} outside image"));
    }
    let (tw, th) = (template.width, template.height);
    if search.w < tw || search.h < th {
        return invalid(format!(
            "search region {}x{} smaller than template {tw}x{th}",
            search.w, search.h
        ));
    }
    let n = (tw * th) as f64;
    let t_mean = template.mean();
    let t_dev: Vec<f64> = template.data.iter().map(|&v| v as f64 - t_mean).collect();
    let t_norm = t_dev.iter().map(|d| d * d).sum::<f64>().sqrt();

    let mut best = NccMatch { x: search.x, y: search.y, score: f64::NEG_INFINITY };
    for oy in search.y..=search.bottom() - th {
        for ox in search.x..=search.right() - tw {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut cross = 0.0;
            for ty in 0..th {
                let row = &image.data[(oy + ty) * image.width + ox..][..tw];
                let trow = &t_dev[ty * tw..(ty + 1) * tw];
                for (&p, &t) in row.iter().zip(trow) {
                    let p = p as f64;
                    sum += p;
                    sum_sq += p * p;
                    cross += p * t;
                }
            }
            let w_var = (sum_sq - sum * sum / n).max(0.0);
            let denom = t_norm * w_var.sqrt();
            let score = if denom > 1e-9 { (cross / denom).clamp(-1.0, 1.0) } else { 0.0 };
            if score > best.score {
                best = NccMatch { x: ox, y: oy, score };
            }
        }
    }
    Ok(best)
}

/// Parses a binary PGM (`P5`, maxval 255).
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Decode("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    if fields[0] != "P5" {
        return Err(Error::Decode(format!("unsupported PGM magic {:?}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Decode(format!("bad PGM header field {s:?}")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Decode(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w * h;
    if bytes.len() < pos + need {
        return Err(Error::Decode("truncated PGM raster".into()));
    }
    GrayImage::new(w, h, bytes[pos..pos + need].to_vec())
        .map_err(|e| Error::Decode(e.to_string()))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Loads a PGM or PNG file as grayscale. PNG color input is converted with
/// the same luma weights as [`to_grayscale`].
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => decode_pgm(&bytes),
        "png" => {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| Error::Decode(e.to_string()))?;
            match img {
                image::DynamicImage::ImageLuma8(g) => {
                    let (w, h) = g.dimensions();
                    GrayImage::new(w as usize, h as usize, g.into_raw())
                }
                other => {
                    let rgb = other.to_rgb8();
                    let (w, h) = rgb.dimensions();
                    to_grayscale(rgb.as_raw(), w as usize, h as usize)
                }
            }
        }
        _ => Err(Error::Decode(format!("unsupported image extension {:?}", path))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_ii(img: &GrayImage, x: usize, y: usize) -> u64 {
        let mut s = 0u64;
        for yy in 0..=y {
            for xx in 0..=x {
                s += img.get(xx, yy) as u64;
            }
        }
        s
    }

    fn random_image(rng: &mut ChaCha8Rng, max: usize) -> GrayImage {
        let w = rng.gen_range(1..=max);
        let h = rng.gen_range(1..=max);
        GrayImage::from_fn(w, h, |_, _| rng.gen())
    }

    #[test]
    fn grayscale_examples() {
        let g = to_grayscale(&[255, 255, 255, 0, 0, 0, 255, 0, 0], 3, 1).unwrap();
        assert_eq!(g.data(), &[255, 0, 76]);
        assert!(matches!(to_grayscale(&[1, 2], 1, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn integral_small_examples() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let ii = integral_image(&img);
        assert_eq!(ii.data, vec![1, 3, 4, 10]);
        let zero = integral_image(&GrayImage::filled(8, 8, 0));
        assert!(zero.data.iter().all(|&v| v == 0));
        assert_eq!(rect_sum(&ii, img.bounds()).unwrap(), 10);
        assert_eq!(rect_sum(&ii, Rect::new(1, 1, 1, 1).unwrap()).unwrap(), 4);
        assert!(rect_sum(&ii, Rect::new(1, 1, 2, 1).unwrap()).is_err());
    }

    #[test]
    fn integral_matches_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let img = random_image(&mut rng, 64);
            let ii = integral_image(&img);
            for y in 0..img.height() {
                for x in 0..img.width() {
                    assert_eq!(ii.at(x as isize, y as isize), naive_ii(&img, x, y));
                }
            }
        }
    }

    #[test]
    fn rect_sum_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let img = random_image(&mut rng, 40);
            let ii = integral_image(&img);
            let x = rng.gen_range(0..img.width());
            let y = rng.gen_range(0..img.height());
            let w = rng.gen_range(1..=img.width() - x);
            let h = rng.gen_range(1..=img.height() - y);
            let mut naive = 0u64;
            for yy in y..y + h {
                for xx in x..x + w {
                    naive += img.get(xx, yy) as u64;
                }
            }
            assert_eq!(rect_sum(&ii, Rect { x, y, w, h }).unwrap(), naive);
        }
    }

    #[test]
    fn integral_fits_largest_supported_image() {
        let img = GrayImage::filled(4096, 4096, 255);
        let ii = integral_image(&img);
        assert_eq!(ii.total(), 4096 * 4096 * 255);
        assert!(ii.total() > i32::MAX as u64);
    }

    #[test]
    fn normalize_examples() {
        let two = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        let p = normalize_patch(&two).unwrap();
        // mean 127.5, std 127.5: (0-127.5)*64/127.5+128 = 64
        assert!((p.data[0] - 64.0).abs() < 1e-12);
        assert!((p.data[1] - 192.0).abs() < 1e-12);

        let flat = GrayImage::new(2, 2, vec![50; 4]).unwrap();
        assert!(matches!(normalize_patch(&flat), Err(Error::DegeneratePatch)));

        let fixed = normalize_values(2, 1, &[64.0, 192.0]).unwrap();
        assert!((fixed.data[0] - 64.0).abs() < 1e-9 && (fixed.data[1] - 192.0).abs() < 1e-9);
    }

    #[test]
    fn pgm_roundtrip_and_comments() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        let bytes = encode_pgm(&img);
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
        let mut commented = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        commented.extend_from_slice(&[9, 200]);
        assert_eq!(decode_pgm(&commented).unwrap().data(), &[9, 200]);
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x01").is_err());
    }

    #[test]
    fn ncc_finds_embedded_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(40, 30, |_, _| rng.gen());
        let tmpl = img.crop(Rect::new(12, 9, 7, 7).unwrap()).unwrap();
        let m = ncc_search(&img, &tmpl, img.bounds()).unwrap();
        assert_eq!((m.x, m.y), (12, 9));
        assert!((m.score - 1.0).abs() < 1e-9);
        assert!(ncc_search(&img, &tmpl, Rect::new(0, 0, 6, 6).unwrap()).is_err());
    }

    #[test]
    fn resample_identity_and_downscale() {
        let img = GrayImage::from_fn(8, 4, |x, y| (x + 10 * y) as u8);
        assert_eq!(img.resample_nearest(img.bounds(), 8, 4).unwrap(), img);
        let half = img.resample_nearest(img.bounds(), 4, 2).unwrap();
        // pixel-center sampling picks odd source rows and columns
        assert_eq!(half.data(), &[11, 13, 15, 17, 31, 33, 35, 37]);
    }

    proptest! {
        #[test]
        fn rect_sum_equals_pixel_sum(
            w in 1usize..24, h in 1usize..24, seed in any::<u64>(),
            fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.0f64..1.0, fh in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(w, h, |_, _| rng.gen());
            let ii = integral_image(&img);
            let x = ((w as f64 * fx) as usize).min(w - 1);
            let y = ((h as f64 * fy) as usize).min(h - 1);
            let rw = 1 + ((w - x - 1) as f64 * fw) as usize;
            let rh = 1 + ((h - y - 1) as f64 * fh) as usize;
            let r = Rect { x, y, w: rw, h: rh };
            let naive: u64 = (y..y + rh)
                .flat_map(|yy| (x..x + rw).map(move |xx| (xx, yy)))
                .map(|(xx, yy)| img.get(xx, yy) as u64)
                .sum();
            prop_assert_eq!(rect_sum(&ii, r).unwrap(), naive);
            prop_assert_eq!(ii.total(), img.data().iter().map(|&v| v as u64).sum::<u64>());
        }

        #[test]
        fn integral_is_monotone_under_brightening(
            w in 1usize..16, h in 1usize..16, seed in any::<u64>(), px in 0usize..256, py in 0usize..256,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::from_fn(w, h, |_, _| rng.gen_range(0..200));
            let (px, py) = (px % w, py % h);
            let mut brighter = img.clone();
            brighter.set(px, py, img.get(px, py) + 40);
            let (a, b) = (integral_image(&img), integral_image(&brighter));
            for y in 0..h {
                for x in 1..w {
                    prop_assert!(a.at(x as isize, y as isize) >= a.at(x as isize - 1, y as isize));
                }
                for x in 0..w {
                    prop_assert!(b.at(x as isize, y as isize) >= a.at(x as isize, y as isize));
                }
            }
        }

        #[test]
        fn normalize_is_idempotent(values in proptest::collection::vec(0u8..=255, 2..64)) {
            let n = values.len();
            let img = GrayImage::new(n, 1, values).unwrap();
            if let Ok(p) = normalize_patch(&img) {
                let mean = p.data.iter().sum::<f64>() / n as f64;
                let std = (p.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
                prop_assert!((mean - 128.0).abs() < 1e-6);
                prop_assert!((std - 64.0).abs() < 1e-6);
                let again = normalize_values(n, 1, &p.data).unwrap();
                for (a, b) in p.data.iter().zip(&again.data) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
