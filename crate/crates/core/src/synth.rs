//! Parametric synthetic face renderer.
//!
//! Produces grayscale frames with known landmark positions. Used for the
//! built-in between-the-eyes template, the `gen-fixtures` command and the
//! test suites. All geometry is expressed in units of the inter-ocular
//! distance and anchored on the between-the-eyes point.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imagecore::GrayImage;
use crate::Point;

const EYE_DX: f64 = 0.5;
const EYE_DY: f64 = -0.15;
const BROW_DY: f64 = -0.38;
const TIP_DY: f64 = 0.55;
const NOSTRIL_DY: f64 = 0.68;
const MOUTH_DY: f64 = 1.02;
const FACE_CY: f64 = 0.3;
const FACE_RX: f64 = 0.98;
const FACE_RY: f64 = 1.32;

/// Everything needed to render one face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub bte: Point,
    pub iod: f64,
    pub skin: f64,
    pub background: f64,
    pub noise_sigma: f64,
    /// Openness of the eye on the image-left side, 1 = open, 0 = closed.
    pub left_open: f64,
    /// Openness of the eye on the image-right side.
    pub right_open: f64,
}

impl FaceParams {
    pub fn new(bte: Point, iod: f64) -> Self {
        Self {
            bte,
            iod,
            skin: 168.0,
            background: 72.0,
            noise_sigma: 3.0,
            left_open: 1.0,
            right_open: 1.0,
        }
    }

    pub fn landmarks(&self) -> FaceLandmarks {
        let d = self.iod;
        let b = self.bte;
        FaceLandmarks {
            bte: b,
            left_eye: Point::new(b.x - EYE_DX * d, b.y + EYE_DY * d),
            right_eye: Point::new(b.x + EYE_DX * d, b.y + EYE_DY * d),
            nose_tip: Point::new(b.x, b.y + TIP_DY * d),
            nostrils: Point::new(b.x, b.y + NOSTRIL_DY * d),
            brow_y: b.y + BROW_DY * d,
        }
    }
}

/// Ground-truth landmark positions in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceLandmarks {
    pub bte: Point,
    pub left_eye: Point,
    pub right_eye: Point,
    pub nose_tip: Point,
    pub nostrils: Point,
    /// Row of the eyebrow centerline.
    pub brow_y: f64,
}

#[inline]
fn gauss2(dx: f64, dy: f64, sx: f64, sy: f64) -> f64 {
    (-0.5 * ((dx / sx).powi(2) + (dy / sy).powi(2))).exp()
}

fn smoothstep(edge0: f64, edge1: f64, v: f64) -> f64 {
    let t = ((v - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Noise-free intensity of the face model at `(x, y)`.
pub fn face_intensity(p: &FaceParams, x: f64, y: f64) -> f64 {
    let d = p.iod;
    let (dx, dy) = ((x - p.bte.x) / d, (y - p.bte.y) / d);

    let r = ((dx / FACE_RX).powi(2) + ((dy - FACE_CY) / FACE_RY).powi(2)).sqrt();
    let mask = 1.0 - smoothstep(0.92, 1.0, r);
    if mask <= 0.0 {
        return p.background;
    }

    let mut v = 0.0;
    for (ex, open) in [(-EYE_DX, p.left_open), (EYE_DX, p.right_open)] {
        let open = open.clamp(0.0, 1.0);
        let eye = gauss2(dx - ex, dy - EYE_DY, 0.12, 0.07);
        let lash = gauss2(dx - ex, dy - EYE_DY - 0.03, 0.12, 0.02);
        v -= 140.0 * open * eye + 45.0 * (1.0 - open) * lash;
        v -= 70.0 * gauss2(dx - ex, dy - BROW_DY, 0.2, 0.045);
    }
    let bridge_span = smoothstep(-0.12, -0.02, dy) * (1.0 - smoothstep(TIP_DY - 0.02, TIP_DY + 0.08, dy));
    v += 20.0 * bridge_span * (-0.5 * (dx / 0.06).powi(2)).exp();
    v += 50.0 * gauss2(dx, dy - TIP_DY, 0.08, 0.07);
    v -= 85.0 * gauss2(dx, dy - NOSTRIL_DY, 0.14, 0.035);
    v -= 70.0 * gauss2(dx, dy - MOUTH_DY, 0.25, 0.04);

    p.background * (1.0 - mask) + (p.skin + v) * mask
}

/// Renders the face into a `width`×`height` frame, adding Gaussian sensor
/// noise drawn from `rng`.
pub fn render_face<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    params: &FaceParams,
    rng: &mut R,
) -> GrayImage {
    let noise = Normal::new(0.0, params.noise_sigma.max(1e-9)).expect("finite sigma");
    let with_noise = params.noise_sigma > 0.0;
    GrayImage::from_fn(width, height, |x, y| {
        let mut v = face_intensity(params, x as f64, y as f64);
        if with_noise {
            v += noise.sample(rng);
        }
        v.round().clamp(0.0, 255.0) as u8
    })
}

/// Noise-free rendering.
pub fn render_face_clean(width: usize, height: usize, params: &FaceParams) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        face_intensity(params, x as f64, y as f64).round().clamp(0.0, 255.0) as u8
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn landmarks_follow_layout() {
        let p = FaceParams::new(Point::new(100.0, 80.0), 32.0);
        let l = p.landmarks();
        assert_eq!(l.left_eye, Point::new(84.0, 75.2));
        assert_eq!(l.right_eye, Point::new(116.0, 75.2));
        assert!(l.nose_tip.y > l.bte.y && l.nostrils.y > l.nose_tip.y);
    }

    #[test]
    fn eyes_dark_tip_bright() {
        let p = FaceParams::new(Point::new(100.0, 80.0), 32.0);
        let img = render_face_clean(200, 200, &p);
        let l = p.landmarks();
        let at = |q: Point| img.get(q.x.round() as usize, q.y.round() as usize);
        assert!(at(l.left_eye) < 60);
        assert!(at(l.nose_tip) > 200);
        assert!(at(l.nostrils) < at(l.nose_tip));
        assert_eq!(img.get(0, 0), 72);
    }

    #[test]
    fn closed_eye_is_brighter_than_open() {
        let mut p = FaceParams::new(Point::new(100.0, 80.0), 32.0);
        let open = render_face_clean(200, 200, &p);
        p.right_open = 0.0;
        let closed = render_face_clean(200, 200, &p);
        let e = p.landmarks().right_eye;
        let (x, y) = (e.x as usize, e.y as usize);
        assert!(closed.get(x, y) > open.get(x, y) + 80);
        let l = p.landmarks().left_eye;
        assert_eq!(closed.get(l.x as usize, l.y as usize), open.get(l.x as usize, l.y as usize));
    }

    #[test]
    fn noisy_render_is_seed_deterministic() {
        let p = FaceParams::new(Point::new(60.0, 50.0), 20.0);
        let a = render_face(120, 100, &p, &mut ChaCha8Rng::seed_from_u64(5));
        let b = render_face(120, 100, &p, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
