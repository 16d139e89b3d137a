//! Camera-based pointer control from facial features.
//!
//! The between-the-eyes point is found with a six-segment rectangular
//! filter evaluated on an integral image, the nose tip is localized from
//! accumulated intensity profiles and tracked by template matching, and eye
//! blinks are detected by frame differencing. Nose motion drives a virtual
//! pointer; voluntary single-eye blinks fire left/right clicks.

pub mod app;
pub mod error;
pub mod hough;
pub mod imagecore;
pub mod motionblink;
pub mod nose;
pub mod pointer;
pub mod ssr;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Sub-pixel image coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    /// Chebyshev distance, used for "within ±n px" checks.
    pub fn max_abs_diff(&self, other: Point) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}
