//! Synthetic fixtures with ground truth: still faces at several scales and
//! scripted sessions with head motion and blinks.
//!
//! Scripts speak in terms of the user's eyes and assume a mirrored camera:
//! the user's left eye is the image-right eye.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imagecore::{encode_pgm, GrayImage};
use crate::ssr::EyeTemplatePair;
use crate::synth::{render_face, FaceLandmarks, FaceParams};
use crate::Point;

pub const FRAME_W: usize = 320;
pub const FRAME_H: usize = 240;
/// Inter-ocular distances of the still-face set, one per detector scale.
pub const FACE_IODS: [f64; 3] = [16.0, 24.0, 32.0];
pub const FACES_PER_SCALE: usize = 30;
pub const SESSION_IOD: f64 = 32.0;

/// Independent generator per (purpose, frame) so any frame can be rendered
/// on its own.
fn frame_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((purpose << 32) | index);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceFixture {
    pub name: String,
    pub iod: f64,
    pub truth: FaceLandmarks,
    #[serde(skip)]
    pub image: GrayImage,
}

/// `FACES_PER_SCALE` noisy renders at each of `FACE_IODS`, placed at random
/// integer BTE positions.
pub fn face_set(seed: u64) -> Vec<FaceFixture> {
    let mut out = Vec::new();
    for (s, &iod) in FACE_IODS.iter().enumerate() {
        let mut place = frame_rng(seed, 1 + s as u64, 0);
        for k in 0..FACES_PER_SCALE {
            let bte = Point::new(place.gen_range(80..240) as f64, place.gen_range(60..140) as f64);
            let p = FaceParams::new(bte, iod);
            let image = render_face(FRAME_W, FRAME_H, &p, &mut frame_rng(seed, 10 + s as u64, k as u64));
            out.push(FaceFixture { name: format!("iod{}_{k:02}.pgm", iod as u32), iod, truth: p.landmarks(), image });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eyes {
    Both,
    UserLeft,
    UserRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptFrame {
    pub bte: Point,
    pub left_open: f64,
    pub right_open: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedBlink {
    pub eyes: Eyes,
    /// First frame with the eye(s) closed.
    pub start: u64,
    pub closed_frames: u64,
    /// Head moving during the blink.
    pub moving: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScript {
    pub iod: f64,
    pub frames: Vec<ScriptFrame>,
    pub blinks: Vec<ScriptedBlink>,
}

/// Builds a script frame by frame.
#[derive(Debug, Clone)]
pub struct ScriptBuilder {
    pos: Point,
    script: SessionScript,
}

impl ScriptBuilder {
    pub fn new(start: Point, iod: f64) -> Self {
        Self { pos: start, script: SessionScript { iod, frames: Vec::new(), blinks: Vec::new() } }
    }

    fn push(&mut self, closed: Option<Eyes>) {
        // image-left eye is the user's right eye
        let (l, r) = match closed {
            None => (1.0, 1.0),
            Some(Eyes::Both) => (0.0, 0.0),
            Some(Eyes::UserLeft) => (1.0, 0.0),
            Some(Eyes::UserRight) => (0.0, 1.0),
        };
        self.script.frames.push(ScriptFrame { bte: self.pos, left_open: l, right_open: r });
    }

    pub fn len(&self) -> u64 {
        self.script.frames.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.script.frames.is_empty()
    }

    pub fn hold(mut self, n: u64) -> Self {
        for _ in 0..n {
            self.push(None);
        }
        self
    }

    pub fn hold_until(self, frame: u64) -> Self {
        let n = frame.saturating_sub(self.len());
        self.hold(n)
    }

    /// Moves `(dx, dy)` per frame for `n` frames.
    pub fn travel(mut self, n: u64, dx: f64, dy: f64) -> Self {
        for _ in 0..n {
            self.pos = self.pos + Point::new(dx, dy);
            self.push(None);
        }
        self
    }

    pub fn blink(mut self, eyes: Eyes, closed: u64) -> Self {
        self.script.blinks.push(ScriptedBlink { eyes, start: self.len(), closed_frames: closed, moving: false });
        for _ in 0..closed {
            self.push(Some(eyes));
        }
        self
    }

    /// Travels for `n` frames and closes `eyes` for `closed` frames starting
    /// `at` frames into the motion.
    pub fn blink_while_moving(mut self, n: u64, dx: f64, dy: f64, eyes: Eyes, at: u64, closed: u64) -> Self {
        let start = self.len() + at;
        self.script.blinks.push(ScriptedBlink { eyes, start, closed_frames: closed, moving: true });
        for k in 0..n {
            self.pos = self.pos + Point::new(dx, dy);
            self.push((at..at + closed).contains(&k).then_some(eyes));
        }
        self
    }

    pub fn build(self) -> SessionScript {
        self.script
    }
}

impl SessionScript {
    pub fn render_frame(&self, seed: u64, index: usize) -> GrayImage {
        let f = &self.frames[index];
        let p = FaceParams { left_open: f.left_open, right_open: f.right_open, ..FaceParams::new(f.bte, self.iod) };
        render_face(FRAME_W, FRAME_H, &p, &mut frame_rng(seed, 100, index as u64))
    }

    pub fn render(&self, seed: u64) -> Vec<GrayImage> {
        (0..self.frames.len()).map(|i| self.render_frame(seed, i)).collect()
    }
}

/// 90 frames: settle, move right, stop, one voluntary left blink.
pub fn short_session() -> SessionScript {
    ScriptBuilder::new(Point::new(150.0, 100.0), SESSION_IOD)
        .hold(20)
        .travel(15, 2.0, 0.0)
        .hold(15)
        .blink(Eyes::UserLeft, 8)
        .hold_until(90)
        .build()
}

/// 300 frames with two involuntary blinks, three voluntary left blinks,
/// one voluntary right blink and one left blink during head motion.
pub fn blink_session() -> SessionScript {
    let s = ScriptBuilder::new(Point::new(140.0, 100.0), SESSION_IOD)
        .hold(30)
        .blink(Eyes::Both, 3)
        .hold(12)
        .travel(20, 2.0, 0.0)
        .hold(10)
        .blink(Eyes::UserLeft, 8)
        .hold(12)
        .travel(15, 0.0, 2.0)
        .hold(30)
        .blink(Eyes::UserLeft, 8)
        .hold(17)
        .blink(Eyes::Both, 2)
        .hold(18)
        .blink(Eyes::UserRight, 8)
        .hold(12)
        .blink_while_moving(20, -2.0, 0.0, Eyes::UserLeft, 5, 8)
        .hold(15)
        .blink(Eyes::UserLeft, 8)
        .hold_until(300)
        .build();
    debug_assert_eq!(s.frames.len(), 300);
    s
}

/// Writes `faces/` (still renders plus `truth.json`), `session/` (the
/// 300-frame blink session plus `script.json`), the built-in eye template
/// as `eye_template.ssrt` and a default `config.json`.
pub fn write_fixtures(out: &Path, seed: u64) -> Result<()> {
    let faces_dir = out.join("faces");
    std::fs::create_dir_all(&faces_dir)?;
    let faces = face_set(seed);
    for f in &faces {
        std::fs::write(faces_dir.join(&f.name), encode_pgm(&f.image))?;
    }
    std::fs::write(faces_dir.join("truth.json"), serde_json::to_string_pretty(&faces).expect("serializable"))?;

    let session_dir = out.join("session");
    std::fs::create_dir_all(&session_dir)?;
    let script = blink_session();
    for (i, img) in script.render(seed).iter().enumerate() {
        std::fs::write(session_dir.join(format!("frame_{i:04}.pgm")), encode_pgm(img))?;
    }
    std::fs::write(session_dir.join("script.json"), serde_json::to_string_pretty(&script).expect("serializable"))?;
    std::fs::write(out.join("eye_template.ssrt"), EyeTemplatePair::synthetic_default().to_bytes())?;
    std::fs::write(out.join("config.json"), super::config::PipelineConfig::default().to_json())?;
    Ok(())
}
