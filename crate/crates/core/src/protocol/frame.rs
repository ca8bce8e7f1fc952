//! Line-delimited JSON frame grammar shared by the wire and the session log:
//!
//! ```text
//! {"kind":"Heartbeat","seq":1,"ts":0,"payload":{}}\n
//! ```
//!
//! Field order is fixed as kind, seq, ts, payload.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated frame")]
    Truncated,
    #[error("frame is not valid UTF-8")]
    InvalidUtf8,
    #[error("more than one frame in input")]
    TrailingData,
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("frame is not a JSON object")]
    NotAnObject,
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("unexpected field `{0}`")]
    UnexpectedField(String),
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("bad field `{field}`: {detail}")]
    BadField { field: &'static str, detail: String },
    #[error("schema violation: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

#[derive(Serialize)]
struct FrameOut<'a> {
    kind: &'a str,
    seq: u64,
    ts: u64,
    payload: &'a Value,
}

/// A syntactically valid frame whose payload has not been interpreted yet.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub kind: String,
    pub seq: u64,
    pub ts: u64,
    pub payload: Map<String, Value>,
}

/// Splits an adjacently tagged `{"kind":..,"payload":..}` value.
pub(crate) fn split_tagged<T: Serialize>(body: &T) -> Result<(String, Map<String, Value>), EncodeError> {
    let value = serde_json::to_value(body).map_err(|e| EncodeError::SchemaViolation(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(EncodeError::SchemaViolation("body is not tagged".into()));
    };
    let kind = match obj.remove("kind") {
        Some(Value::String(k)) => k,
        _ => return Err(EncodeError::SchemaViolation("body has no kind".into())),
    };
    let payload = match obj.remove("payload") {
        Some(Value::Object(p)) => p,
        None => Map::new(),
        Some(_) => return Err(EncodeError::SchemaViolation("payload is not an object".into())),
    };
    Ok((kind, payload))
}

/// Reassembles an adjacently tagged body from a raw frame.
pub(crate) fn join_tagged<T: DeserializeOwned>(
    kind: &str,
    payload: Map<String, Value>,
    known: &[&str],
) -> Result<T, DecodeError> {
    if !known.contains(&kind) {
        return Err(DecodeError::UnknownKind(kind.to_owned()));
    }
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::String(kind.to_owned()));
    obj.insert("payload".into(), Value::Object(payload));
    serde_json::from_value(Value::Object(obj)).map_err(|e| DecodeError::BadField {
        field: "payload",
        detail: e.to_string(),
    })
}

pub fn write_frame(kind: &str, seq: u64, ts: u64, payload: &Map<String, Value>) -> Vec<u8> {
    let payload = Value::Object(payload.clone());
    let mut out = serde_json::to_vec(&FrameOut {
        kind,
        seq,
        ts,
        payload: &payload,
    })
    .expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// Parses exactly one newline-terminated frame.
pub fn parse_frame(bytes: &[u8]) -> Result<RawFrame, DecodeError> {
    let Some(newline) = bytes.iter().position(|&b| b == b'\n') else {
        return Err(DecodeError::Truncated);
    };
    if newline + 1 != bytes.len() {
        return Err(DecodeError::TrailingData);
    }
    parse_line(&bytes[..newline])
}

/// Parses one frame without its terminating newline.
pub fn parse_line(line: &[u8]) -> Result<RawFrame, DecodeError> {
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let text = std::str::from_utf8(line).map_err(|_| DecodeError::InvalidUtf8)?;
    if text.trim().is_empty() {
        return Err(DecodeError::Truncated);
    }
    let value: Value = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Eof => DecodeError::Truncated,
        _ => DecodeError::Syntax(e.to_string()),
    })?;
    let Value::Object(mut obj) = value else {
        return Err(DecodeError::NotAnObject);
    };
    let kind = match obj.remove("kind") {
        Some(Value::String(k)) => k,
        Some(other) => {
            return Err(DecodeError::BadField {
                field: "kind",
                detail: format!("expected string, got {other}"),
            })
        }
        None => return Err(DecodeError::MissingField("kind")),
    };
    let seq = take_u64(&mut obj, "seq")?;
    let ts = take_u64(&mut obj, "ts")?;
    let payload = match obj.remove("payload") {
        Some(Value::Object(p)) => p,
        Some(other) => {
            return Err(DecodeError::BadField {
                field: "payload",
                detail: format!("expected object, got {other}"),
            })
        }
        None => return Err(DecodeError::MissingField("payload")),
    };
    if let Some(extra) = obj.keys().next() {
        return Err(DecodeError::UnexpectedField(extra.clone()));
    }
    Ok(RawFrame { kind, seq, ts, payload })
}

fn take_u64(obj: &mut Map<String, Value>, field: &'static str) -> Result<u64, DecodeError> {
    match obj.remove(field) {
        Some(v) => v.as_u64().ok_or_else(|| DecodeError::BadField {
            field,
            detail: format!("expected unsigned integer, got {v}"),
        }),
        None => Err(DecodeError::MissingField(field)),
    }
}

/// Splits a byte stream into frame lines. A final fragment without a newline
/// is reported as `Truncated`.
pub fn split_frames(bytes: &[u8]) -> impl Iterator<Item = Result<&[u8], DecodeError>> {
    let mut rest = bytes;
    std::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        match rest.iter().position(|&b| b == b'\n') {
            Some(i) => {
                let (line, tail) = rest.split_at(i + 1);
                rest = tail;
                Some(Ok(line))
            }
            None => {
                rest = &[];
                Some(Err(DecodeError::Truncated))
            }
        }
    })
}
