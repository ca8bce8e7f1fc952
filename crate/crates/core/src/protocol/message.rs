use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::frame::{join_tagged, parse_frame, split_tagged, write_frame, DecodeError, EncodeError, RawFrame};
use crate::ids::{AgentId, BlockId, ParticipantId};
use crate::perception::DetectionFrame;
use crate::world_model::{ActionKind, ActionOutcome, DenyReason, PieceSource, ReleaseCause, StateSnapshot, TaskConfig};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Hello,
    ConfigPush,
    StartTask,
    AllocationRequest,
    AllocationResponse,
    ReleaseBlock,
    PuzzleMove,
    StateUpdate,
    DetectionFrame,
    ActionStart,
    ActionEnd,
    SessionEnd,
    Error,
    Heartbeat,
    RobotStop,
}

impl MessageKind {
    pub const ALL: [MessageKind; 15] = [
        MessageKind::Hello,
        MessageKind::ConfigPush,
        MessageKind::StartTask,
        MessageKind::AllocationRequest,
        MessageKind::AllocationResponse,
        MessageKind::ReleaseBlock,
        MessageKind::PuzzleMove,
        MessageKind::StateUpdate,
        MessageKind::DetectionFrame,
        MessageKind::ActionStart,
        MessageKind::ActionEnd,
        MessageKind::SessionEnd,
        MessageKind::Error,
        MessageKind::Heartbeat,
        MessageKind::RobotStop,
    ];

    const NAMES: [&'static str; 15] = [
        "Hello",
        "ConfigPush",
        "StartTask",
        "AllocationRequest",
        "AllocationResponse",
        "ReleaseBlock",
        "PuzzleMove",
        "StateUpdate",
        "DetectionFrame",
        "ActionStart",
        "ActionEnd",
        "SessionEnd",
        "Error",
        "Heartbeat",
        "RobotStop",
    ];

    pub fn as_str(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

/// Who a connection speaks for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientRole {
    Robot,
    Human { participant: ParticipantId },
    Perception,
    Observer,
}

impl ClientRole {
    pub fn agent(&self) -> Option<AgentId> {
        match self {
            ClientRole::Robot => Some(AgentId::Robot),
            ClientRole::Human { participant } => Some(AgentId::Human(participant.clone())),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ClientRole::Robot => "robot".into(),
            ClientRole::Human { participant } => format!("human:{participant}"),
            ClientRole::Perception => "perception".into(),
            ClientRole::Observer => "observer".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub version: u32,
    pub role: ClientRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigPush {
    pub config: TaskConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartTask {
    pub participant: ParticipantId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationRequest {
    pub requester: AgentId,
    pub block_id: BlockId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationResponse {
    pub requester: AgentId,
    pub block_id: BlockId,
    pub granted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<DenyReason>,
    /// Server-assigned arbitration order of the request.
    pub receipt: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseBlock {
    pub agent: AgentId,
    pub block_id: BlockId,
    /// `explicit` when absent; clients may also report `fault`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<ReleaseCause>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleMove {
    pub participant: ParticipantId,
    pub from: PieceSource,
    pub to_slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub state: StateSnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionStart {
    pub agent: AgentId,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_id: Option<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEnd {
    pub agent: AgentId,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_id: Option<BlockId>,
    pub outcome: ActionOutcome,
    /// Stack the block was physically put on, when the action placed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placed_on: Option<ParticipantId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEnd {
    pub done: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heartbeat {}

/// The robot has stopped collaborating; carries why and what it contributed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotStop {
    pub reason: String,
    pub contributed: BTreeMap<ParticipantId, u32>,
}

/// Kind-specific message body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Payload {
    Hello(Hello),
    ConfigPush(ConfigPush),
    StartTask(StartTask),
    AllocationRequest(AllocationRequest),
    AllocationResponse(AllocationResponse),
    ReleaseBlock(ReleaseBlock),
    PuzzleMove(PuzzleMove),
    StateUpdate(StateUpdate),
    DetectionFrame(DetectionFrame),
    ActionStart(ActionStart),
    ActionEnd(ActionEnd),
    SessionEnd(SessionEnd),
    Error(ErrorBody),
    Heartbeat(Heartbeat),
    RobotStop(RobotStop),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Hello(_) => MessageKind::Hello,
            Payload::ConfigPush(_) => MessageKind::ConfigPush,
            Payload::StartTask(_) => MessageKind::StartTask,
            Payload::AllocationRequest(_) => MessageKind::AllocationRequest,
            Payload::AllocationResponse(_) => MessageKind::AllocationResponse,
            Payload::ReleaseBlock(_) => MessageKind::ReleaseBlock,
            Payload::PuzzleMove(_) => MessageKind::PuzzleMove,
            Payload::StateUpdate(_) => MessageKind::StateUpdate,
            Payload::DetectionFrame(_) => MessageKind::DetectionFrame,
            Payload::ActionStart(_) => MessageKind::ActionStart,
            Payload::ActionEnd(_) => MessageKind::ActionEnd,
            Payload::SessionEnd(_) => MessageKind::SessionEnd,
            Payload::Error(_) => MessageKind::Error,
            Payload::Heartbeat(_) => MessageKind::Heartbeat,
            Payload::RobotStop(_) => MessageKind::RobotStop,
        }
    }

    /// Semantic checks beyond what the type system enforces.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Payload::AllocationResponse(r) => match (r.granted, r.reason) {
                (true, Some(_)) => Err("granted response carries a denial reason".into()),
                (false, None) => Err("denied response has no reason".into()),
                _ => Ok(()),
            },
            Payload::DetectionFrame(f) => f.validate(),
            Payload::ConfigPush(c) => {
                let cfg = &c.config;
                let finite = cfg
                    .inventories
                    .iter()
                    .map(|i| &i.position)
                    .chain(cfg.geometry.stack_bases.iter().map(|b| &b.position))
                    .flatten()
                    .chain([&cfg.geometry.transfer_height_m])
                    .all(|v| v.is_finite());
                if !finite {
                    return Err("config holds a non-finite coordinate".into());
                }
                cfg.validate().map_err(|e| e.to_string())
            }
            Payload::StateUpdate(s) => {
                let distinct: BTreeSet<_> = s.state.blocks.values().map(|b| b.tag_id).collect();
                if distinct.len() != s.state.blocks.len() {
                    return Err("state repeats a tag id".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// One protocol message.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub seq: u64,
    /// Milliseconds since the session epoch.
    pub ts: u64,
    pub payload: Payload,
}

impl Message {
    pub fn new(seq: u64, ts: u64, payload: Payload) -> Self {
        Message { seq, ts, payload }
    }

    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

/// Encodes one message as a newline-terminated frame.
pub fn encode_message(m: &Message) -> Result<Vec<u8>, EncodeError> {
    m.payload.validate().map_err(EncodeError::SchemaViolation)?;
    let (kind, payload) = split_tagged(&m.payload)?;
    debug_assert_eq!(kind, m.kind().as_str());
    Ok(write_frame(&kind, m.seq, m.ts, &payload))
}

/// Decodes exactly one newline-terminated frame.
pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    message_from_raw(parse_frame(bytes)?)
}

pub fn message_from_raw(raw: RawFrame) -> Result<Message, DecodeError> {
    let payload: Payload = join_tagged(&raw.kind, raw.payload, &MessageKind::NAMES)?;
    payload.validate().map_err(DecodeError::Schema)?;
    Ok(Message {
        seq: raw.seq,
        ts: raw.ts,
        payload,
    })
}

/// Decodes a byte stream of concatenated frames, one result per line.
pub fn decode_stream(bytes: &[u8]) -> Vec<Result<Message, DecodeError>> {
    super::frame::split_frames(bytes)
        .map(|line| line.and_then(decode_message))
        .collect()
}

/// Stamps outgoing payloads with strictly increasing sequence numbers.
#[derive(Debug, Clone, Default)]
pub struct Sequencer {
    next: u64,
}

impl Sequencer {
    pub fn new() -> Self {
        Sequencer { next: 1 }
    }

    pub fn stamp(&mut self, ts: u64, payload: Payload) -> Message {
        if self.next == 0 {
            self.next = 1;
        }
        let m = Message::new(self.next, ts, payload);
        self.next += 1;
        m
    }
}

/// Checks that incoming sequence numbers strictly increase.
#[derive(Debug, Clone, Default)]
pub struct SeqTracker {
    last: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("sequence number {got} does not follow {last}")]
pub struct OutOfOrder {
    pub last: u64,
    pub got: u64,
}

impl SeqTracker {
    pub fn observe(&mut self, seq: u64) -> Result<(), OutOfOrder> {
        if let Some(last) = self.last {
            if seq <= last {
                return Err(OutOfOrder { last, got: seq });
            }
        }
        self.last = Some(seq);
        Ok(())
    }
}
