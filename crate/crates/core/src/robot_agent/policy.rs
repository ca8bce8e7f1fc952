use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{AgentId, BlockId, ParticipantId};
use crate::world_model::{topmost_unstacked, InventoryAccess, Phase, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    StackFor {
        beneficiary: ParticipantId,
        block_id: BlockId,
    },
    Idle,
    Stop {
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionPhase {
    Requesting,
    Picking,
    Placing,
    /// Physically placed; waiting for perception to confirm it.
    Confirming,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveAction {
    pub block_id: BlockId,
    pub beneficiary: ParticipantId,
    pub phase: ActionPhase,
    /// Stack length when the allocation was requested.
    pub stack_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotPolicyState {
    pub contributed: BTreeMap<ParticipantId, u32>,
    pub next_beneficiary: ParticipantId,
    pub active_action: Option<ActiveAction>,
}

impl RobotPolicyState {
    pub fn new(participants: &[ParticipantId]) -> Self {
        RobotPolicyState {
            contributed: participants.iter().map(|p| (p.clone(), 0)).collect(),
            next_beneficiary: participants
                .first()
                .cloned()
                .unwrap_or_else(|| ParticipantId::new("P1")),
            active_action: None,
        }
    }

    /// Refreshes contribution counts from the blocks the robot has stacked.
    pub fn sync(&mut self, world: &WorldState) {
        self.contributed = world.contributions(&AgentId::Robot);
    }

    /// Records that the robot finished stacking for `beneficiary`.
    pub fn served(&mut self, world: &WorldState, beneficiary: &ParticipantId) {
        if *beneficiary == self.next_beneficiary {
            let ps = &world.config.participants;
            if let Some(i) = ps.iter().position(|p| p == beneficiary) {
                self.next_beneficiary = ps[(i + 1) % ps.len()].clone();
            }
        }
        self.sync(world);
    }
}

/// A robot decision rule, selected by `TaskConfig::robot_policy`.
pub trait RobotPolicy: Send + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn select_action(&self, world: &WorldState, state: &RobotPolicyState) -> Action;
}

#[derive(Debug, thiserror::Error)]
#[error("unknown robot policy {0:?}")]
pub struct UnknownPolicy(pub String);

pub fn policy_for(name: &str) -> Result<Box<dyn RobotPolicy>, UnknownPolicy> {
    match name {
        "alternating_equal" => Ok(Box::new(AlternatingEqual)),
        other => Err(UnknownPolicy(other.to_owned())),
    }
}

/// Stacks for each participant in turn and stops once it could no longer keep
/// its contributions to every participant equal.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlternatingEqual;

impl RobotPolicy for AlternatingEqual {
    fn name(&self) -> &'static str {
        "alternating_equal"
    }

    fn select_action(&self, world: &WorldState, state: &RobotPolicyState) -> Action {
        select_action(world, state)
    }
}

/// The block the robot could stack for `participant` right now, if any.
///
/// The participant must be stacking, have no block already in flight to their
/// stack, and the next color they need must be on top of a pile the robot can
/// reach.
pub fn available_block(world: &WorldState, participant: &ParticipantId) -> Option<BlockId> {
    if world.phase(participant) != Some(Phase::Stacking) {
        return None;
    }
    if world.working_for(participant).next().is_some() {
        return None;
    }
    let need = world.stacks.get(participant)?.next_color()?;
    world
        .config
        .inventories
        .iter()
        .filter(|inv| inv.serves == *participant && inv.access.contains(&InventoryAccess::Robot))
        .filter_map(|inv| topmost_unstacked(world, &inv.id).ok().flatten())
        .find(|b| world.blocks[b].color == need)
}

/// Open slots another participant must have before the robot starts a new
/// round from a tie: one the participant may fill concurrently, one for the robot.
pub const TIE_MARGIN: usize = 2;

/// Slots of `participant`'s stack not yet placed or claimed.
pub fn open_slots(world: &WorldState, participant: &ParticipantId) -> usize {
    let Some(stack) = world.stacks.get(participant) else {
        return 0;
    };
    let remaining = stack.pattern.len() - stack.placed.len();
    remaining.saturating_sub(world.working_for(participant).count())
}

/// Reference equal-effort policy.
///
/// With equal contributions the robot serves `next_beneficiary`, or another
/// participant for this turn if the preferred one has nothing available, and
/// stops if any stack is already complete or the others have fewer than
/// `TIE_MARGIN` open slots left. With unequal contributions it only
/// serves the participants it has helped least, and stops if one of their
/// stacks is complete since equality can no longer be restored.
pub fn select_action(world: &WorldState, state: &RobotPolicyState) -> Action {
    let ps = &world.config.participants;
    if ps.is_empty() || state.active_action.is_some() {
        return Action::Idle;
    }
    let counts = world.contributions(&AgentId::Robot);
    let count = |p: &ParticipantId| counts.get(p).copied().unwrap_or(0);
    let min = ps.iter().map(count).min().unwrap_or(0);
    let max = ps.iter().map(count).max().unwrap_or(0);
    let complete = |p: &ParticipantId| world.stacks.get(p).is_some_and(|s| s.is_complete());

    let start = ps.iter().position(|p| *p == state.next_beneficiary).unwrap_or(0);
    let rotation = (0..ps.len()).map(|i| &ps[(start + i) % ps.len()]);

    if min == max {
        if let Some(done) = ps.iter().find(|p| complete(p)) {
            return Action::Stop {
                reason: format!("stack of {done} is complete with contributions equal at {min}"),
            };
        }
        let mut blocked_by_margin = false;
        for p in rotation {
            let Some(block_id) = available_block(world, p) else {
                continue;
            };
            if ps.iter().any(|q| q != p && open_slots(world, q) < TIE_MARGIN) {
                blocked_by_margin = true;
                continue;
            }
            return Action::StackFor {
                beneficiary: p.clone(),
                block_id,
            };
        }
        if blocked_by_margin {
            return Action::Stop {
                reason: format!(
                    "another stack is too close to complete to return the favor; contributions equal at {min}"
                ),
            };
        }
        return Action::Idle;
    }

    let lagging: Vec<&ParticipantId> = rotation.filter(|p| count(p) == min).collect();
    if let Some(done) = lagging.iter().find(|p| complete(p)) {
        return Action::Stop {
            reason: format!("stack of {done} is complete; contributions cannot be equalized"),
        };
    }
    for p in lagging {
        if let Some(block_id) = available_block(world, p) {
            return Action::StackFor {
                beneficiary: p.clone(),
                block_id,
            };
        }
    }
    Action::Idle
}
