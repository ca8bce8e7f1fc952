//! Session log entries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::TaskConfig;
use super::state::Phase;
use crate::ids::{Actor, AgentId, BlockId, Color, ParticipantId, PieceId};

/// Why an allocation request was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    AlreadyClaimed,
    NotTopmost,
    WrongPhase,
    UnknownBlock,
    /// The requester may not draw from this block's inventory.
    NotPermitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseCause {
    Explicit,
    Timeout,
    ClientLost,
    Fault,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PieceSource {
    Tray { piece: PieceId },
    Slot { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    /// Robot picks from a pile at the stacking station and places on a stack.
    PickPlace,
    /// Human walks to the block station, returns, and places on their stack.
    FetchPlace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionOutcome {
    Completed,
    Faulted,
    Aborted,
}

/// Body of a log entry. Serialized adjacently tagged so the kind name and
/// payload map directly onto the frame grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    SessionStart {
        config: TaskConfig,
    },
    StartTask {
        participant: ParticipantId,
    },
    Allocate {
        agent: AgentId,
        block_id: BlockId,
        receipt: u64,
    },
    AllocationDenied {
        agent: AgentId,
        block_id: BlockId,
        receipt: u64,
        reason: DenyReason,
    },
    Release {
        agent: AgentId,
        block_id: BlockId,
        cause: ReleaseCause,
    },
    StackPlaced {
        block_id: BlockId,
        owner: ParticipantId,
        slot: usize,
    },
    Mismatch {
        owner: ParticipantId,
        slot: usize,
        block_id: Option<BlockId>,
        expected: Option<Color>,
        detail: String,
    },
    PuzzleMove {
        participant: ParticipantId,
        from: PieceSource,
        to_slot: usize,
    },
    PhaseChange {
        participant: ParticipantId,
        phase: Phase,
    },
    ActionStart {
        agent: AgentId,
        action: ActionKind,
        block_id: Option<BlockId>,
    },
    ActionEnd {
        agent: AgentId,
        action: ActionKind,
        block_id: Option<BlockId>,
        outcome: ActionOutcome,
    },
    ClientJoined {
        client: String,
    },
    ClientLost {
        client: String,
    },
    RobotStop {
        reason: String,
        contributed: BTreeMap<ParticipantId, u32>,
    },
    SessionEnd {
        done: bool,
        reason: String,
        /// SHA-256 over every preceding log frame.
        log_digest: String,
        /// SHA-256 over the canonical final state snapshot.
        state_digest: String,
    },
}

impl EventBody {
    pub const KINDS: &'static [&'static str] = &[
        "SessionStart",
        "StartTask",
        "Allocate",
        "AllocationDenied",
        "Release",
        "StackPlaced",
        "Mismatch",
        "PuzzleMove",
        "PhaseChange",
        "ActionStart",
        "ActionEnd",
        "ClientJoined",
        "ClientLost",
        "RobotStop",
        "SessionEnd",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionStart { .. } => "SessionStart",
            EventBody::StartTask { .. } => "StartTask",
            EventBody::Allocate { .. } => "Allocate",
            EventBody::AllocationDenied { .. } => "AllocationDenied",
            EventBody::Release { .. } => "Release",
            EventBody::StackPlaced { .. } => "StackPlaced",
            EventBody::Mismatch { .. } => "Mismatch",
            EventBody::PuzzleMove { .. } => "PuzzleMove",
            EventBody::PhaseChange { .. } => "PhaseChange",
            EventBody::ActionStart { .. } => "ActionStart",
            EventBody::ActionEnd { .. } => "ActionEnd",
            EventBody::ClientJoined { .. } => "ClientJoined",
            EventBody::ClientLost { .. } => "ClientLost",
            EventBody::RobotStop { .. } => "RobotStop",
            EventBody::SessionEnd { .. } => "SessionEnd",
        }
    }

    /// Kinds that `apply_transition` folds into the world state.
    pub fn is_state_changing(&self) -> bool {
        matches!(
            self,
            EventBody::StartTask { .. }
                | EventBody::Allocate { .. }
                | EventBody::Release { .. }
                | EventBody::StackPlaced { .. }
                | EventBody::PuzzleMove { .. }
        )
    }
}

/// One timestamped log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub ts_ms: u64,
    pub actor: Actor,
    pub body: EventBody,
}

impl SessionEvent {
    pub fn new(ts_ms: u64, actor: impl Into<Actor>, body: EventBody) -> Self {
        SessionEvent {
            ts_ms,
            actor: actor.into(),
            body,
        }
    }
}
