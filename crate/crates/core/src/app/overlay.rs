//! Annotated debug frames.

use std::path::Path;

use super::pipeline::FrameDebug;
use crate::error::{Error, Result};
use crate::imagecore::{GrayImage, Rect};
use crate::Point;

pub const CANDIDATE: [u8; 3] = [40, 90, 255];
pub const BTE: [u8; 3] = [255, 230, 0];
pub const EYE: [u8; 3] = [0, 220, 0];
pub const NOSE_ROI: [u8; 3] = [0, 200, 220];
pub const BRIDGE: [u8; 3] = [230, 0, 230];
pub const NOSTRIL: [u8; 3] = [255, 140, 0];
pub const TIP: [u8; 3] = [255, 0, 0];
pub const EYEBROW: [u8; 3] = [90, 160, 255];
pub const BLINK: [u8; 3] = [255, 60, 60];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn from_gray(g: &GrayImage) -> Self {
        let data = g.data().iter().flat_map(|&v| [v, v, v]).collect();
        Self { width: g.width(), height: g.height(), data }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.data[i..i + 3].copy_from_slice(&c);
        }
    }

    fn blend(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        for k in 0..3 {
            self.data[i + k] = ((self.data[i + k] as u16 + c[k] as u16) / 2) as u8;
        }
    }

    fn cross(&mut self, p: Point, arm: i64, c: [u8; 3]) {
        let (x, y) = (p.x.round() as i64, p.y.round() as i64);
        for d in -arm..=arm {
            self.put(x + d, y, c);
            self.put(x, y + d, c);
        }
    }

    fn rect(&mut self, r: Rect, c: [u8; 3]) {
        let (x0, y0) = (r.x as i64, r.y as i64);
        let (x1, y1) = (x0 + r.w as i64 - 1, y0 + r.h as i64 - 1);
        for x in x0..=x1 {
            self.put(x, y0, c);
            self.put(x, y1, c);
        }
        for y in y0..=y1 {
            self.put(x0, y, c);
            self.put(x1, y, c);
        }
    }

    fn line(&mut self, a: Point, b: Point, c: [u8; 3]) {
        let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as i64;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            self.put((a.x + t * (b.x - a.x)).round() as i64, (a.y + t * (b.y - a.y)).round() as i64, c);
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(path, &self.data, self.width as u32, self.height as u32, image::ColorType::Rgb8)
            .map_err(|e| Error::Decode(e.to_string()))
    }
}

/// Draws what the pipeline saw on `frame`. Depends only on its inputs.
pub fn render_overlay(frame: &GrayImage, dbg: &FrameDebug) -> RgbImage {
    let mut img = RgbImage::from_gray(frame);
    if let Some(mask) = &dbg.candidates {
        if (mask.width, mask.height) == (img.width, img.height) {
            for y in 0..mask.height {
                for x in 0..mask.width {
                    if mask.get(x, y) {
                        img.blend(x, y, CANDIDATE);
                    }
                }
            }
        }
    }
    if let Some(fix) = &dbg.nose_fix {
        img.rect(fix.roi.rect, NOSE_ROI);
        for p in &fix.bridge {
            img.put(p.center_x().round() as i64, p.row as i64, BRIDGE);
        }
        if let Some(row) = fix.nostril_row {
            let r = fix.roi.rect;
            img.line(Point::new(r.x as f64, row as f64), Point::new((r.right() - 1) as f64, row as f64), NOSTRIL);
        }
    }
    for (line, region) in &dbg.eyebrows {
        if let Some((a, b)) = line.clip(*region) {
            img.line(a, b, EYEBROW);
        }
    }
    for (i, r) in dbg.eye_rois.iter().enumerate() {
        let side = if i == 0 { crate::motionblink::Side::Left } else { crate::motionblink::Side::Right };
        img.rect(*r, if dbg.blinking.contains(&side) { BLINK } else { EYE });
    }
    if let Some(eyes) = dbg.eyes {
        for e in eyes {
            img.cross(e, 2, EYE);
        }
    }
    if let Some(det) = &dbg.detection {
        img.cross(det.bte, 3, BTE);
    }
    if let Some(n) = dbg.nose {
        img.cross(n.point(), 3, TIP);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nose::NosePoint;

    #[test]
    fn empty_debug_is_plain_copy() {
        let g = GrayImage::from_fn(10, 8, |x, y| (x * 10 + y) as u8);
        let o = render_overlay(&g, &FrameDebug::default());
        assert_eq!(o, RgbImage::from_gray(&g));
        assert_eq!(o.get(3, 2), [32, 32, 32]);
    }

    #[test]
    fn markers_land_on_coordinates() {
        let g = GrayImage::filled(40, 30, 100);
        let dbg = FrameDebug {
            nose: Some(NosePoint { x: 20.0, y: 15.0, confidence: 1.0 }),
            eyes: Some([Point::new(10.0, 8.0), Point::new(30.0, 8.0)]),
            eye_rois: vec![Rect { x: 6, y: 5, w: 9, h: 7 }, Rect { x: 26, y: 5, w: 9, h: 7 }],
            blinking: vec![crate::motionblink::Side::Right],
            ..Default::default()
        };
        let o = render_overlay(&g, &dbg);
        assert_eq!(o.get(20, 15), TIP);
        assert_eq!(o.get(23, 15), TIP);
        assert_eq!(o.get(10, 8), EYE);
        assert_eq!(o.get(6, 5), EYE);
        assert_eq!(o.get(26, 5), BLINK);
        assert_eq!(o.get(0, 0), [100, 100, 100]);
        assert_eq!(render_overlay(&g, &dbg), o);
    }

    #[test]
    fn writes_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.png");
        let g = GrayImage::filled(6, 4, 50);
        render_overlay(&g, &FrameDebug::default()).save_png(&p).unwrap();
        let back = crate::imagecore::load_gray(&p).unwrap();
        assert_eq!(back, g);
    }
}
