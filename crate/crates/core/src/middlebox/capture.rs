use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FlowId;
use crate::suite::Direction;
use crate::wire::{decode_handshake, decode_record, ContentType, HandshakeMessage, HandshakeType};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("capture ends mid-line")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Decoded view of a record. Advisory only; the raw bytes are authoritative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureSummary {
    pub record_type: String,
    pub handshake_type: Option<String>,
    pub sni: Option<String>,
}

impl CaptureSummary {
    pub fn of(raw: &[u8]) -> CaptureSummary {
        let record_type = match raw.first().map(|b| ContentType::try_from(*b)) {
            Some(Ok(ct)) => ct.name().to_owned(),
            Some(Err(_)) => format!("unknown({:#04x})", raw[0]),
            None => "empty".to_owned(),
        };
        let mut summary = CaptureSummary { record_type, handshake_type: None, sni: None };
        let Ok(Some((frame, _))) = decode_record(raw) else {
            return summary;
        };
        if frame.content_type != ContentType::Handshake {
            return summary;
        }
        if let Some(&code) = frame.payload.first() {
            summary.handshake_type = Some(match HandshakeType::try_from(code) {
                Ok(t) => t.name().to_owned(),
                Err(_) => format!("unknown({code:#04x})"),
            });
        }
        if let Ok(HandshakeMessage::ClientHello(hello)) = decode_handshake(&frame.payload) {
            summary.sni = hello.sni().and_then(Result::ok).map(|s| s.as_str().to_owned());
        }
        summary
    }
}

/// One record as it crossed the observation point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureEvent {
    pub time_us: u64,
    pub flow: FlowId,
    pub direction: Direction,
    pub raw: Vec<u8>,
    pub summary: CaptureSummary,
}

impl CaptureEvent {
    pub fn new(time_us: u64, flow: FlowId, direction: Direction, raw: Vec<u8>) -> Self {
        let summary = CaptureSummary::of(&raw);
        CaptureEvent { time_us, flow, direction, raw, summary }
    }

    /// Tab-separated line without the trailing newline.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.time_us,
            self.flow,
            self.direction.label(),
            hex::encode(&self.raw),
            serde_json::to_string(&self.summary).expect("summary always serializes"),
        )
    }

    pub fn parse_line(text: &str) -> Result<CaptureEvent, String> {
        let fields: Vec<&str> = text.splitn(5, '\t').collect();
        let [time, flow, dir, raw, summary] = fields[..] else {
            return Err(format!("expected 5 tab-separated fields, got {}", fields.len()));
        };
        let direction = match dir {
            "C2S" => Direction::ClientToServer,
            "S2C" => Direction::ServerToClient,
            other => return Err(format!("bad direction {other:?}")),
        };
        Ok(CaptureEvent {
            time_us: time.parse().map_err(|_| format!("bad time {time:?}"))?,
            flow: flow.parse().map_err(|e| format!("{e}"))?,
            direction,
            raw: hex::decode(raw).map_err(|e| format!("bad hex: {e}"))?,
            summary: serde_json::from_str(summary).map_err(|e| format!("bad summary: {e}"))?,
        })
    }
}

pub fn capture_write(events: &[CaptureEvent], path: &Path) -> io::Result<()> {
    let mut text = String::new();
    for ev in events {
        text.push_str(&ev.to_line());
        text.push('\n');
    }
    fs::write(path, text)
}

pub fn capture_read(path: &Path) -> Result<Vec<CaptureEvent>, ParseError> {
    let text = fs::read_to_string(path)?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(ParseError::Truncated);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| CaptureEvent::parse_line(l).map_err(|msg| ParseError::Line { line: i + 1, msg }))
        .collect()
}
