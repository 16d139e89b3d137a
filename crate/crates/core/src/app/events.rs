//! Event records and the JSON Lines log.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::motionblink::{BlinkEvent, Side};
use crate::pointer::Button;
use crate::Point;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    /// Face found and tracking locked.
    Face {
        bte: Point,
        left_eye: Point,
        right_eye: Point,
        scale_w: usize,
        scale_h: usize,
        score: f64,
    },
    Nose {
        x: f64,
        y: f64,
        confidence: f64,
        /// False on the frame the tip was localized from profiles.
        tracked: bool,
    },
    Pointer {
        x: f64,
        y: f64,
    },
    Blink(BlinkEvent),
    Click {
        button: Button,
    },
    /// Open-eye template captured for the given user eye.
    Template {
        side: Side,
        source_frame: u64,
    },
    Reinit {
        reason: String,
    },
    Metrics {
        fps: f64,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Face { .. } => "face",
            Event::Nose { .. } => "nose",
            Event::Pointer { .. } => "pointer",
            Event::Blink(_) => "blink",
            Event::Click { .. } => "click",
            Event::Template { .. } => "template",
            Event::Reinit { .. } => "reinit",
            Event::Metrics { .. } => "metrics",
        }
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub v: u32,
    pub frame: u64,
    #[serde(flatten)]
    pub event: Event,
}

impl EventRecord {
    pub fn new(frame: u64, event: Event) -> Self {
        Self { v: SCHEMA_VERSION, frame, event }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| crate::Error::Decode(e.to_string()))
    }
}

pub trait EventSink {
    fn emit(&mut self, rec: &EventRecord) -> Result<()>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> EventSink for JsonlSink<W> {
    fn emit(&mut self, rec: &EventRecord) -> Result<()> {
        writeln!(self.out, "{}", rec.to_line())?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl EventSink for Vec<EventRecord> {
    fn emit(&mut self, rec: &EventRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

pub fn parse_log(text: &str) -> Result<Vec<EventRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(EventRecord::from_line).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_are_flat_and_versioned() {
        let r = EventRecord::new(7, Event::Click { button: Button::Left });
        assert_eq!(r.to_line(), r#"{"v":1,"frame":7,"kind":"click","button":"left"}"#);
        let b = EventRecord::new(9, Event::Blink(BlinkEvent::new(Side::Right, 3, 5, 10.0)));
        assert_eq!(
            b.to_line(),
            r#"{"v":1,"frame":9,"kind":"blink","side":"right","start_frame":3,"end_frame":5,"duration_ms":30.0,"voluntary":false,"both_eyes":false}"#
        );
    }

    #[test]
    fn every_kind_round_trips() {
        let p = Point::new(1.5, -2.0);
        let all = vec![
            Event::Face { bte: p, left_eye: p, right_eye: p, scale_w: 24, scale_h: 12, score: 3.25 },
            Event::Nose { x: 1.0, y: 2.0, confidence: 0.75, tracked: true },
            Event::Pointer { x: 640.0, y: 360.0 },
            Event::Blink(BlinkEvent { voluntary: true, ..BlinkEvent::new(Side::Left, 1, 9, 1000.0 / 30.0) }),
            Event::Click { button: Button::Right },
            Event::Template { side: Side::Left, source_frame: 4 },
            Event::Reinit { reason: "nose".into() },
            Event::Metrics { fps: 29.97 },
        ];
        let mut sink = JsonlSink::new(Vec::new());
        for (i, e) in all.iter().enumerate() {
            sink.emit(&EventRecord::new(i as u64, e.clone())).unwrap();
        }
        let text = String::from_utf8(sink.into_inner()).unwrap();
        let back = parse_log(&text).unwrap();
        assert_eq!(back.len(), all.len());
        for (r, e) in back.iter().zip(&all) {
            assert_eq!(&r.event, e);
            assert_eq!(r.event.kind(), serde_json::to_value(&r.event).unwrap()["kind"]);
        }
    }
}
