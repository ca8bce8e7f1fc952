use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, TaskConfig};
use crate::ids::{AgentId, BlockId, Color, InventoryId, ParticipantId, PieceId, TagId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipulationState {
    Unstacked,
    Working,
    Stacked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block_id: BlockId,
    pub tag_id: TagId,
    pub color: Color,
    pub state: ManipulationState,
    /// Current holder while Working; the agent that placed it once Stacked.
    pub manipulator: Option<AgentId>,
    pub inventory: InventoryId,
    /// 0 is the top of the pile.
    pub inventory_depth: usize,
    pub stack_slot: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackState {
    Incomplete,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackRecord {
    pub owner: ParticipantId,
    pub pattern: Vec<Color>,
    pub placed: Vec<BlockId>,
    pub state: StackState,
}

impl StackRecord {
    /// Color the next placement must have, if any slot remains.
    pub fn next_color(&self) -> Option<Color> {
        self.pattern.get(self.placed.len()).copied()
    }

    pub fn is_complete(&self) -> bool {
        self.state == StackState::Complete
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleRecord {
    pub rows: u32,
    pub cols: u32,
    pub grid: Vec<Option<PieceId>>,
    pub tray: Vec<PieceId>,
    pub solved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingStart,
    Puzzling,
    Stacking,
    Done,
}

/// Everything a client needs to render the task, without the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub clock_ms: u64,
    pub phases: BTreeMap<ParticipantId, Phase>,
    pub blocks: BTreeMap<BlockId, BlockRecord>,
    pub stacks: BTreeMap<ParticipantId, StackRecord>,
    pub puzzles: BTreeMap<ParticipantId, PuzzleRecord>,
}

/// Authoritative task state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub config: Arc<TaskConfig>,
    pub blocks: BTreeMap<BlockId, BlockRecord>,
    pub stacks: BTreeMap<ParticipantId, StackRecord>,
    pub puzzles: BTreeMap<ParticipantId, PuzzleRecord>,
    pub phases: BTreeMap<ParticipantId, Phase>,
    pub session_clock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown inventory {0}")]
pub struct UnknownInventory(pub InventoryId);

pub fn new_session(config: TaskConfig) -> Result<WorldState, ConfigError> {
    new_session_shared(Arc::new(config))
}

pub fn new_session_shared(config: Arc<TaskConfig>) -> Result<WorldState, ConfigError> {
    config.validate()?;
    let catalog = config.catalog();
    let mut blocks = BTreeMap::new();
    for inv in &config.inventories {
        for (depth, id) in inv.blocks.iter().enumerate() {
            let entry = catalog[id];
            blocks.insert(
                id.clone(),
                BlockRecord {
                    block_id: id.clone(),
                    tag_id: entry.tag_id,
                    color: entry.color,
                    state: ManipulationState::Unstacked,
                    manipulator: None,
                    inventory: inv.id.clone(),
                    inventory_depth: depth,
                    stack_slot: None,
                },
            );
        }
    }
    let stacks = config
        .stacks
        .iter()
        .map(|s| {
            (
                s.owner.clone(),
                StackRecord {
                    owner: s.owner.clone(),
                    pattern: s.pattern.clone(),
                    placed: Vec::new(),
                    state: StackState::Incomplete,
                },
            )
        })
        .collect();
    let puzzles = config
        .puzzles
        .iter()
        .map(|p| {
            (
                p.participant.clone(),
                PuzzleRecord {
                    rows: p.rows,
                    cols: p.cols,
                    grid: vec![None; p.slots()],
                    tray: p.solution.clone(),
                    solved: false,
                },
            )
        })
        .collect();
    let phases = config
        .participants
        .iter()
        .map(|p| (p.clone(), Phase::AwaitingStart))
        .collect();
    Ok(WorldState {
        config,
        blocks,
        stacks,
        puzzles,
        phases,
        session_clock_ms: 0,
    })
}

impl WorldState {
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            clock_ms: self.session_clock_ms,
            phases: self.phases.clone(),
            blocks: self.blocks.clone(),
            stacks: self.stacks.clone(),
            puzzles: self.puzzles.clone(),
        }
    }

    /// Rebuilds a state from a pushed config plus a snapshot, as clients do.
    pub fn from_snapshot(config: Arc<TaskConfig>, snap: StateSnapshot) -> WorldState {
        WorldState {
            config,
            blocks: snap.blocks,
            stacks: snap.stacks,
            puzzles: snap.puzzles,
            phases: snap.phases,
            session_clock_ms: snap.clock_ms,
        }
    }

    pub fn phase(&self, p: &ParticipantId) -> Option<Phase> {
        self.phases.get(p).copied()
    }

    pub fn block(&self, id: &BlockId) -> Option<&BlockRecord> {
        self.blocks.get(id)
    }

    /// Participant whose stack a block is destined for.
    pub fn serves(&self, id: &BlockId) -> Option<&ParticipantId> {
        let rec = self.blocks.get(id)?;
        self.config.inventory(&rec.inventory).map(|i| &i.serves)
    }

    /// Blocks currently Working that are destined for `owner`'s stack.
    pub fn working_for<'a>(&'a self, owner: &'a ParticipantId) -> impl Iterator<Item = &'a BlockRecord> + 'a {
        self.blocks
            .values()
            .filter(move |b| b.state == ManipulationState::Working && self.serves(&b.block_id) == Some(owner))
    }

    /// Blocks held by `agent`.
    pub fn held_by<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a BlockRecord> + 'a {
        self.blocks
            .values()
            .filter(move |b| b.state == ManipulationState::Working && b.manipulator.as_ref() == Some(agent))
    }

    /// Count of stacked blocks per stack owner placed by `agent`.
    pub fn contributions(&self, agent: &AgentId) -> BTreeMap<ParticipantId, u32> {
        let mut out: BTreeMap<ParticipantId, u32> = self.config.participants.iter().map(|p| (p.clone(), 0)).collect();
        for stack in self.stacks.values() {
            let n = stack
                .placed
                .iter()
                .filter(|b| self.blocks[*b].manipulator.as_ref() == Some(agent))
                .count() as u32;
            out.insert(stack.owner.clone(), n);
        }
        out
    }

    /// Checks every module invariant. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let catalog_ids: BTreeSet<&BlockId> = self.config.blocks.iter().map(|b| &b.id).collect();
        let state_ids: BTreeSet<&BlockId> = self.blocks.keys().collect();
        if catalog_ids != state_ids {
            return Err("block set differs from catalog".into());
        }
        for b in self.blocks.values() {
            match b.state {
                ManipulationState::Working if b.manipulator.is_none() => {
                    return Err(format!("{} is Working without a manipulator", b.block_id));
                }
                ManipulationState::Unstacked if b.manipulator.is_some() => {
                    return Err(format!("{} is Unstacked with a manipulator", b.block_id));
                }
                ManipulationState::Stacked if b.stack_slot.is_none() => {
                    return Err(format!("{} is Stacked without a slot", b.block_id));
                }
                ManipulationState::Unstacked | ManipulationState::Working if b.stack_slot.is_some() => {
                    return Err(format!("{} has a slot but is not Stacked", b.block_id));
                }
                _ => {}
            }
        }
        let mut stacked_seen = BTreeSet::new();
        for s in self.stacks.values() {
            if s.placed.len() > s.pattern.len() {
                return Err(format!("stack of {} overflows its pattern", s.owner));
            }
            for (i, id) in s.placed.iter().enumerate() {
                let b = self
                    .blocks
                    .get(id)
                    .ok_or_else(|| format!("stack of {} holds unknown block {id}", s.owner))?;
                if b.color != s.pattern[i] {
                    return Err(format!("stack of {} is not a prefix of its pattern", s.owner));
                }
                if b.state != ManipulationState::Stacked || b.stack_slot != Some(i) {
                    return Err(format!("{id} in stack of {} is not Stacked at slot {i}", s.owner));
                }
                if !stacked_seen.insert(id) {
                    return Err(format!("{id} appears in more than one stack slot"));
                }
            }
            let complete = s.placed.len() == s.pattern.len();
            if complete != s.is_complete() {
                return Err(format!("stack of {} has inconsistent completion state", s.owner));
            }
        }
        let stacked_total = self
            .blocks
            .values()
            .filter(|b| b.state == ManipulationState::Stacked)
            .count();
        if stacked_total != stacked_seen.len() {
            return Err("a Stacked block is missing from every stack".into());
        }
        for spec in &self.config.puzzles {
            let p = self
                .puzzles
                .get(&spec.participant)
                .ok_or_else(|| format!("missing puzzle for {}", spec.participant))?;
            let mut pieces: Vec<&PieceId> = p.grid.iter().flatten().chain(p.tray.iter()).collect();
            pieces.sort();
            let mut expected: Vec<&PieceId> = spec.solution.iter().collect();
            expected.sort();
            if pieces != expected {
                return Err(format!("puzzle of {} lost or duplicated a piece", spec.participant));
            }
            let solved = p
                .grid
                .iter()
                .zip(&spec.solution)
                .all(|(cell, want)| cell.as_ref() == Some(want));
            if solved != p.solved {
                return Err(format!("puzzle of {} has a stale solved flag", spec.participant));
            }
        }
        for (pid, phase) in &self.phases {
            let solved = self.puzzles[pid].solved;
            let complete = self.stacks[pid].is_complete();
            let ok = match phase {
                Phase::AwaitingStart | Phase::Puzzling => !solved && self.stacks[pid].placed.is_empty(),
                Phase::Stacking => solved && !complete,
                Phase::Done => solved && complete,
            };
            if !ok {
                return Err(format!("phase {phase:?} of {pid} is inconsistent with its task state"));
            }
        }
        Ok(())
    }
}

/// The least-deep Unstacked block of an inventory pile.
pub fn topmost_unstacked(state: &WorldState, inventory: &InventoryId) -> Result<Option<BlockId>, UnknownInventory> {
    let inv = state
        .config
        .inventory(inventory)
        .ok_or_else(|| UnknownInventory(inventory.clone()))?;
    Ok(inv
        .blocks
        .iter()
        .find(|id| state.blocks[*id].state == ManipulationState::Unstacked)
        .cloned())
}

/// True once every puzzle is solved and every stack is complete.
pub fn is_session_done(state: &WorldState) -> bool {
    state.puzzles.values().all(|p| p.solved) && state.stacks.values().all(|s| s.is_complete())
}
