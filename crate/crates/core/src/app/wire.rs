//! Live wire protocol.
//!
//! Client to server, binary: `"FRM1"`, width u16 LE, height u16 LE, format
//! u8 (0 = 8-bit gray), then `width * height` payload bytes, row-major.
//! Client to server, text: `{"cmd":"reset"}` or `{"cmd":"config", ...}`
//! where the remaining keys are merged into the running configuration.
//! Server to client, text: one `state` message per processed frame, `ack`
//! after a command, and `error` for anything rejected.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::events::EventRecord;
use crate::imagecore::GrayImage;
use crate::nose::NosePoint;
use crate::pointer::PointerState;
use crate::Point;

pub const FRAME_MAGIC: [u8; 4] = *b"FRM1";
pub const HEADER_LEN: usize = 9;
pub const FORMAT_GRAY8: u8 = 0;
/// Default pixel limit for one frame.
pub const MAX_FRAME_PIXELS: usize = 1920 * 1080;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    BadFrame,
    BadFormat,
    TooLarge,
    BadCommand,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: ErrorCode,
    pub message: String,
}

impl WireError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

pub fn encode_frame(img: &GrayImage) -> Vec<u8> {
    assert!(img.width() <= u16::MAX as usize && img.height() <= u16::MAX as usize, "frame too large for the wire");
    let mut out = Vec::with_capacity(HEADER_LEN + img.data().len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&(img.width() as u16).to_le_bytes());
    out.extend_from_slice(&(img.height() as u16).to_le_bytes());
    out.push(FORMAT_GRAY8);
    out.extend_from_slice(img.data());
    out
}

pub fn decode_frame(bytes: &[u8], max_pixels: usize) -> Result<GrayImage, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::new(ErrorCode::BadFrame, format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != FRAME_MAGIC {
        return Err(WireError::new(ErrorCode::BadFrame, "bad magic"));
    }
    let w = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let h = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if bytes[8] != FORMAT_GRAY8 {
        return Err(WireError::new(ErrorCode::BadFormat, format!("unsupported pixel format {}", bytes[8])));
    }
    if w * h > max_pixels {
        return Err(WireError::new(ErrorCode::TooLarge, format!("{w}x{h} exceeds {max_pixels} pixels")));
    }
    let payload = &bytes[HEADER_LEN..];
    if w == 0 || h == 0 || payload.len() != w * h {
        return Err(WireError::new(
            ErrorCode::BadFrame,
            format!("{w}x{h} frame with {} payload bytes", payload.len()),
        ));
    }
    GrayImage::new(w, h, payload.to_vec()).map_err(|e| WireError::new(ErrorCode::BadFrame, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
pub enum Command {
    Reset,
    Config {
        #[serde(flatten)]
        patch: Map<String, Value>,
    },
}

pub fn parse_command(text: &str) -> Result<Command, WireError> {
    serde_json::from_str(text).map_err(|e| WireError::new(ErrorCode::BadCommand, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceState {
    pub bte: Point,
    pub left_eye: Point,
    pub right_eye: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub frame: u64,
    pub calibrated: bool,
    pub fps: Option<f64>,
    pub face: Option<FaceState>,
    pub nose: Option<NosePoint>,
    pub pointer: Option<PointerState>,
    /// Everything the pipeline emitted for this frame.
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    State(StateMessage),
    Ack { cmd: String },
    Error { code: ErrorCode, message: String },
}

impl ServerMessage {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn from_text(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

impl From<WireError> for ServerMessage {
    fn from(e: WireError) -> Self {
        ServerMessage::Error { code: e.code, message: e.message }
    }
}
