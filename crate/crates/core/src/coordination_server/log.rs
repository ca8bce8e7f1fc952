//! Append-only session log. Each entry is one frame in the wire grammar with
//! the authoring actor as the first payload field.

use std::io::Write;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::protocol::frame::{join_tagged, parse_line, split_frames, split_tagged, write_frame, DecodeError};
use crate::world_model::{EventBody, SessionEvent, StateSnapshot};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log line {line}: {source}")]
    Decode { line: usize, source: DecodeError },
    #[error("log line {line}: {detail}")]
    Structure { line: usize, detail: String },
    #[error("log io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode_event(seq: u64, event: &SessionEvent) -> Vec<u8> {
    let (kind, body) = split_tagged(&event.body).expect("event bodies are always tagged objects");
    let mut payload = serde_json::Map::with_capacity(body.len() + 1);
    payload.insert("actor".into(), Value::String(event.actor.to_string()));
    payload.extend(body);
    write_frame(&kind, seq, event.ts_ms, &payload)
}

pub fn decode_event(line: &[u8]) -> Result<(u64, SessionEvent), DecodeError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let mut raw = parse_line(line)?;
    let actor = match raw.payload.remove("actor") {
        Some(Value::String(a)) => a
            .parse()
            .map_err(|e: crate::ids::ParseAgentError| DecodeError::BadField {
                field: "actor",
                detail: e.to_string(),
            })?,
        Some(other) => {
            return Err(DecodeError::BadField {
                field: "actor",
                detail: format!("expected string, got {other}"),
            })
        }
        None => return Err(DecodeError::MissingField("actor")),
    };
    let body: EventBody = join_tagged(&raw.kind, raw.payload, EventBody::KINDS)?;
    Ok((
        raw.seq,
        SessionEvent {
            ts_ms: raw.ts,
            actor,
            body,
        },
    ))
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn state_digest(snapshot: &StateSnapshot) -> String {
    digest_hex(&serde_json::to_vec(snapshot).expect("snapshots serialize"))
}

/// Digest that seals a log: every preceding frame followed by the closing
/// `SessionEnd` frame encoded with an empty `log_digest`.
fn seal_digest(preceding: &[u8], seq: u64, end: &SessionEvent) -> String {
    let mut blank = end.clone();
    if let EventBody::SessionEnd { log_digest, .. } = &mut blank.body {
        log_digest.clear();
    }
    let mut h = Sha256::new();
    h.update(preceding);
    h.update(encode_event(seq, &blank));
    hex::encode(h.finalize())
}

/// The log being written by a running session.
#[derive(Debug, Clone, Default)]
pub struct SessionLog {
    events: Vec<SessionEvent>,
    bytes: Vec<u8>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event. Timestamps are clamped to be non-decreasing.
    pub fn append(&mut self, mut event: SessionEvent) -> &SessionEvent {
        if let Some(last) = self.events.last() {
            event.ts_ms = event.ts_ms.max(last.ts_ms);
        }
        let seq = self.events.len() as u64 + 1;
        self.bytes.extend_from_slice(&encode_event(seq, &event));
        self.events.push(event);
        self.events.last().expect("just pushed")
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Digest over every frame appended so far.
    pub fn digest(&self) -> String {
        digest_hex(&self.bytes)
    }

    /// Appends the closing `SessionEnd`, filling in its `log_digest` so that
    /// any change to any frame, the closing one included, is detectable.
    pub fn seal(&mut self, ts_ms: u64, done: bool, reason: &str, state_digest: String) -> &SessionEvent {
        let ts_ms = ts_ms.max(self.last_ts());
        let mut end = SessionEvent::new(
            ts_ms,
            crate::ids::Actor::Server,
            EventBody::SessionEnd {
                done,
                reason: reason.to_owned(),
                log_digest: String::new(),
                state_digest,
            },
        );
        let digest = seal_digest(&self.bytes, self.events.len() as u64 + 1, &end);
        if let EventBody::SessionEnd { log_digest, .. } = &mut end.body {
            *log_digest = digest;
        }
        self.append(end)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn last_ts(&self) -> u64 {
        self.events.last().map_or(0, |e| e.ts_ms)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.bytes)?;
        f.flush()
    }
}

/// A decoded log file together with the raw bytes of each frame.
#[derive(Debug, Clone)]
pub struct LoadedLog {
    pub events: Vec<SessionEvent>,
    pub frames: Vec<Vec<u8>>,
}

impl LoadedLog {
    pub fn parse(bytes: &[u8]) -> Result<LoadedLog, LogError> {
        let mut events = Vec::new();
        let mut frames = Vec::new();
        for (i, line) in split_frames(bytes).enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| LogError::Decode { line: line_no, source })?;
            let (seq, event) = decode_event(line).map_err(|source| LogError::Decode { line: line_no, source })?;
            if seq != line_no as u64 {
                return Err(LogError::Structure {
                    line: line_no,
                    detail: format!("sequence number {seq}, expected {line_no}"),
                });
            }
            if let Some(prev) = events.last().map(|e: &SessionEvent| e.ts_ms) {
                if event.ts_ms < prev {
                    return Err(LogError::Structure {
                        line: line_no,
                        detail: "timestamps decrease".into(),
                    });
                }
            }
            events.push(event);
            frames.push(line.to_vec());
        }
        match (events.first(), events.last()) {
            (Some(first), Some(last))
                if matches!(first.body, EventBody::SessionStart { .. })
                    && matches!(last.body, EventBody::SessionEnd { .. }) => {}
            _ => {
                return Err(LogError::Structure {
                    line: events.len(),
                    detail: "log must open with SessionStart and close with SessionEnd".into(),
                })
            }
        }
        if let Some(pos) = events[1..]
            .iter()
            .position(|e| matches!(e.body, EventBody::SessionStart { .. }))
        {
            return Err(LogError::Structure {
                line: pos + 2,
                detail: "second SessionStart".into(),
            });
        }
        if let Some(pos) = events[..events.len() - 1]
            .iter()
            .position(|e| matches!(e.body, EventBody::SessionEnd { .. }))
        {
            return Err(LogError::Structure {
                line: pos + 1,
                detail: "SessionEnd before the end of the log".into(),
            });
        }
        Ok(LoadedLog { events, frames })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<LoadedLog, LogError> {
        Self::parse(&std::fs::read(path)?)
    }

    /// Recomputes the seal and compares it with the recorded `log_digest`.
    pub fn verify_seal(&self) -> Result<(), String> {
        let n = self.frames.len();
        let end = self.events.last().ok_or("empty log")?;
        let EventBody::SessionEnd { log_digest, .. } = &end.body else {
            return Err("log is not closed by SessionEnd".into());
        };
        let preceding: Vec<u8> = self.frames[..n - 1].concat();
        let expected = seal_digest(&preceding, n as u64, end);
        if *log_digest == expected {
            Ok(())
        } else {
            Err(format!("log digest {log_digest} does not match recomputed {expected}"))
        }
    }
}
