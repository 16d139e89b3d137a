//! Between-the-eyes reference pattern, the half-template mismatch measure
//! and the `SSRT` binary container.

use crate::error::{Error, Result};
use crate::imagecore::{normalize_values, GrayImage, NormalizedPatch};
use crate::synth::{render_face_clean, FaceParams};
use crate::Point;

use super::{extract_candidate_patch, SsrGeometry};

pub const PATTERN_W: usize = 32;
pub const PATTERN_H: usize = 16;
pub const HALF_W: usize = PATTERN_W / 2;
const HALF_LEN: usize = HALF_W * PATTERN_H;

const MAGIC: &[u8; 4] = b"SSRT";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Left,
    Right,
}

/// Maps half-template index `(i, j)` (row `i`, column `j`, both 0..16) to
/// the `(x, y)` pixel of the 32×16 pattern.
#[inline]
pub fn half_pixel(half: Half, i: usize, j: usize) -> (usize, usize) {
    match half {
        Half::Left => (j, i),
        Half::Right => (HALF_W + j, i),
    }
}

fn split_half(values: &[f64], half: Half) -> Vec<f64> {
    let mut out = Vec::with_capacity(HALF_LEN);
    for i in 0..PATTERN_H {
        for j in 0..HALF_W {
            let (x, y) = half_pixel(half, i, j);
            out.push(values[y * PATTERN_W + x]);
        }
    }
    out
}

/// Mismatch of a candidate against the reference, one value per half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchScore {
    pub d_left: f64,
    pub d_right: f64,
}

impl MismatchScore {
    pub fn total(&self) -> f64 {
        self.d_left + self.d_right
    }
}

/// Reference pattern `t` and per-pixel variance `v` for both halves of the
/// 32×16 between-the-eyes pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeTemplatePair {
    t_left: Vec<f32>,
    t_right: Vec<f32>,
    v_left: Vec<f32>,
    v_right: Vec<f32>,
    norm_left: Vec<f64>,
    norm_right: Vec<f64>,
}

impl EyeTemplatePair {
    /// Builds a pair from row-major half buffers (16×16 each).
    pub fn from_halves(
        t_left: Vec<f32>,
        t_right: Vec<f32>,
        v_left: Vec<f32>,
        v_right: Vec<f32>,
    ) -> Result<Self> {
        for (name, buf) in [("t_left", &t_left), ("t_right", &t_right), ("v_left", &v_left), ("v_right", &v_right)] {
            if buf.len() != HALF_LEN {
                return Err(Error::InvalidTemplate(format!(
                    "{name} has {} values, expected {HALF_LEN}",
                    buf.len()
                )));
            }
        }
        if let Some(v) = v_left.iter().chain(&v_right).find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidTemplate(format!("variance {v} is not positive")));
        }
        let norm = |t: &[f32]| -> Result<Vec<f64>> {
            let vals: Vec<f64> = t.iter().map(|&v| v as f64).collect();
            normalize_values(HALF_W, PATTERN_H, &vals)
                .map(|p| p.data)
                .map_err(|_| Error::InvalidTemplate("template half has zero variance".into()))
        };
        Ok(Self {
            norm_left: norm(&t_left)?,
            norm_right: norm(&t_right)?,
            t_left,
            t_right,
            v_left,
            v_right,
        })
    }

    /// Template from a 32×16 pattern image with unit variance everywhere.
    pub fn from_pattern(pattern: &GrayImage) -> Result<Self> {
        if pattern.width() != PATTERN_W || pattern.height() != PATTERN_H {
            return Err(Error::InvalidInput(format!(
                "pattern must be {PATTERN_W}x{PATTERN_H}, got {}x{}",
                pattern.width(),
                pattern.height()
            )));
        }
        let vals: Vec<f64> = pattern.data().iter().map(|&v| v as f64).collect();
        let to_f32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<_>>();
        Self::from_halves(
            to_f32(split_half(&vals, Half::Left)),
            to_f32(split_half(&vals, Half::Right)),
            vec![1.0; HALF_LEN],
            vec![1.0; HALF_LEN],
        )
    }

    /// Built-in reference rendered from the synthetic face model at its
    /// canonical scale, extracted exactly as candidates are.
    pub fn synthetic_default() -> Self {
        let iod = 24.0;
        let params = FaceParams::new(Point::new(64.0, 48.0), iod);
        let frame = render_face_clean(128, 112, &params);
        let geom = SsrGeometry::for_iod(iod);
        let patch = extract_candidate_patch(&frame, params.bte, geom)
            .expect("canonical face fits its frame");
        Self::from_pattern(&patch).expect("canonical pattern is not flat")
    }

    pub fn variance(&self, half: Half) -> &[f32] {
        match half {
            Half::Left => &self.v_left,
            Half::Right => &self.v_right,
        }
    }

    pub fn reference(&self, half: Half) -> &[f32] {
        match half {
            Half::Left => &self.t_left,
            Half::Right => &self.t_right,
        }
    }

    /// Replaces the variance maps; every entry must be positive.
    pub fn with_variance(self, v_left: Vec<f32>, v_right: Vec<f32>) -> Result<Self> {
        Self::from_halves(self.t_left, self.t_right, v_left, v_right)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * 4 * HALF_LEN);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(PATTERN_W as u16).to_le_bytes());
        out.extend_from_slice(&(PATTERN_H as u16).to_le_bytes());
        for buf in [&self.t_left, &self.t_right, &self.v_left, &self.v_right] {
            for v in buf.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidTemplate(m.to_string());
        if bytes.len() < 9 || &bytes[..4] != MAGIC {
            return Err(bad("missing SSRT magic"));
        }
        if bytes[4] != VERSION {
            return Err(bad(&format!("unsupported SSRT version {}", bytes[4])));
        }
        let w = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
        let h = u16::from_le_bytes([bytes[7], bytes[8]]) as usize;
        if (w, h) != (PATTERN_W, PATTERN_H) {
            return Err(bad(&format!("unsupported pattern size {w}x{h}")));
        }
        let body = &bytes[9..];
        if body.len() != 4 * 4 * HALF_LEN {
            return Err(bad("SSRT payload length mismatch"));
        }
        let mut bufs = body
            .chunks_exact(4 * HALF_LEN)
            .map(|c| {
                c.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect::<Vec<f32>>()
            });
        let mut next = || bufs.next().expect("four buffers");
        let (tl, tr, vl, vr) = (next(), next(), next(), next());
        Self::from_halves(tl, tr, vl, vr)
    }
}

/// Variance-weighted squared difference between each separately
/// normalized half of `patch` and the corresponding template half.
pub fn template_mismatch(patch: &NormalizedPatch, tmpl: &EyeTemplatePair) -> Result<MismatchScore> {
    if patch.width != PATTERN_W || patch.height != PATTERN_H {
        return Err(Error::InvalidInput(format!(
            "candidate patch must be {PATTERN_W}x{PATTERN_H}, got {}x{}",
            patch.width, patch.height
        )));
    }
    let half_score = |half: Half, reference: &[f64], var: &[f32]| -> Result<f64> {
        let p = normalize_values(HALF_W, PATTERN_H, &split_half(&patch.data, half))?;
        Ok(p.data
            .iter()
            .zip(reference)
            .zip(var)
            .map(|((p, t), v)| (p - t) * (p - t) / *v as f64)
            .sum())
    };
    Ok(MismatchScore {
        d_left: half_score(Half::Left, &tmpl.norm_left, &tmpl.v_left)?,
        d_right: half_score(Half::Right, &tmpl.norm_right, &tmpl.v_right)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::normalize_patch;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pattern(rng: &mut ChaCha8Rng) -> GrayImage {
        GrayImage::from_fn(PATTERN_W, PATTERN_H, |_, _| rng.gen())
    }

    /// Straight double loop over the 32×16 grid with explicit half offsets.
    fn naive_mismatch(patch: &GrayImage, tmpl: &GrayImage) -> (f64, f64) {
        let mut out = [0.0; 2];
        for (k, x0) in [0usize, 16].into_iter().enumerate() {
            let stats = |img: &GrayImage| {
                let mut vals = Vec::new();
                for y in 0..16 {
                    for x in x0..x0 + 16 {
                        vals.push(img.get(x, y) as f64);
                    }
                }
                let m = vals.iter().sum::<f64>() / 256.0;
                let s = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 256.0).sqrt();
                vals.into_iter().map(|v| (v - m) / s * 64.0 + 128.0).collect::<Vec<_>>()
            };
            let (p, t) = (stats(patch), stats(tmpl));
            out[k] = p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
        }
        (out[0], out[1])
    }

    #[test]
    fn identical_patch_has_zero_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pat = random_pattern(&mut rng);
        let tmpl = EyeTemplatePair::from_pattern(&pat).unwrap();
        let m = template_mismatch(&normalize_patch(&pat).unwrap(), &tmpl).unwrap();
        assert!(m.d_left.abs() < 1e-9 && m.d_right.abs() < 1e-9);
    }

    #[test]
    fn uniform_offset_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pat = GrayImage::from_fn(PATTERN_W, PATTERN_H, |_, _| rng.gen_range(0..255));
        let shifted = GrayImage::from_fn(PATTERN_W, PATTERN_H, |x, y| pat.get(x, y) + 1);
        let tmpl = EyeTemplatePair::from_pattern(&pat).unwrap();
        let m = template_mismatch(&normalize_patch(&shifted).unwrap(), &tmpl).unwrap();
        assert!(m.d_left.abs() < 1e-9 && m.d_right.abs() < 1e-9);
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (p, t) = (random_pattern(&mut rng), random_pattern(&mut rng));
            let tmpl = EyeTemplatePair::from_pattern(&t).unwrap();
            let m = template_mismatch(&normalize_patch(&p).unwrap(), &tmpl).unwrap();
            let (dl, dr) = naive_mismatch(&p, &t);
            assert!((m.d_left - dl).abs() < 1e-9 * dl.max(1.0), "{} vs {}", m.d_left, dl);
            assert!((m.d_right - dr).abs() < 1e-9 * dr.max(1.0));
        }
    }

    #[test]
    fn variance_divides_each_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (p, t) = (random_pattern(&mut rng), random_pattern(&mut rng));
        let unit = EyeTemplatePair::from_pattern(&t).unwrap();
        let quad = unit.clone().with_variance(vec![4.0; 256], vec![2.0; 256]).unwrap();
        let np = normalize_patch(&p).unwrap();
        let (a, b) = (template_mismatch(&np, &unit).unwrap(), template_mismatch(&np, &quad).unwrap());
        assert!((a.d_left / 4.0 - b.d_left).abs() < 1e-6);
        assert!((a.d_right / 2.0 - b.d_right).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = EyeTemplatePair::from_pattern(&random_pattern(&mut rng)).unwrap();
        assert!(matches!(
            t.clone().with_variance(vec![0.0; 256], vec![1.0; 256]),
            Err(Error::InvalidTemplate(_))
        ));
        let small = normalize_patch(&GrayImage::from_fn(16, 16, |x, y| (x * y) as u8)).unwrap();
        assert!(matches!(template_mismatch(&small, &t), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ssrt_layout_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = EyeTemplatePair::from_pattern(&random_pattern(&mut rng))
            .unwrap()
            .with_variance((0..256).map(|i| 1.0 + i as f32 * 0.25).collect(), vec![3.5; 256])
            .unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..9], b"SSRT\x01\x20\x00\x10\x00");
        assert_eq!(bytes.len(), 9 + 4 * 4 * 256);
        let back = EyeTemplatePair::from_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
        assert!(EyeTemplatePair::from_bytes(&bytes[..100]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(EyeTemplatePair::from_bytes(&wrong).is_err());
    }

    #[test]
    fn synthetic_default_has_dark_eyes() {
        let t = EyeTemplatePair::synthetic_default();
        let left = t.reference(Half::Left);
        let centre_col = (0..16).map(|i| left[i * 16 + 15]).sum::<f32>();
        let eye_col = (0..16).map(|i| left[i * 16 + 5]).sum::<f32>();
        assert!(eye_col < centre_col);
    }

    proptest! {
        #[test]
        fn mismatch_invariant_under_affine_remap(seed in any::<u64>(), a in 0.1f64..5.0, b in -100.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, t) = (random_pattern(&mut rng), random_pattern(&mut rng));
            let tmpl = EyeTemplatePair::from_pattern(&t).unwrap();
            let raw: Vec<f64> = p.data().iter().map(|&v| v as f64).collect();
            let remapped: Vec<f64> = raw.iter().map(|v| a * v + b).collect();
            let m1 = template_mismatch(&normalize_values(32, 16, &raw).unwrap(), &tmpl).unwrap();
            let m2 = template_mismatch(&normalize_values(32, 16, &remapped).unwrap(), &tmpl).unwrap();
            prop_assert!((m1.d_left - m2.d_left).abs() < 1e-6 * m1.d_left.max(1.0));
            prop_assert!((m1.d_right - m2.d_right).abs() < 1e-6 * m1.d_right.max(1.0));
        }

        #[test]
        fn ssrt_roundtrip_is_bit_exact(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut buf = |lo: f32| (0..256).map(|_| rng.gen_range(lo..1000.0f32)).collect::<Vec<_>>();
            let t = EyeTemplatePair::from_halves(buf(0.0), buf(0.0), buf(0.01), buf(0.01)).unwrap();
            let back = EyeTemplatePair::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), t.to_bytes());
        }
    }
}
