//! The block, stack, puzzle and phase state machines.

use thiserror::Error;

use super::config::InventoryAccess;
use super::event::{EventBody, PieceSource, SessionEvent};
use super::state::{topmost_unstacked, ManipulationState, Phase, StackState, WorldState};
use crate::ids::{AgentId, BlockId, Color, ParticipantId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("illegal transition of {block}: {from:?} -> {to:?}")]
    IllegalTransition {
        block: BlockId,
        from: ManipulationState,
        to: ManipulationState,
    },
    #[error("{block} is not the topmost unstacked block of its pile")]
    NotTopmost { block: BlockId },
    #[error("{participant} is in phase {phase:?}")]
    WrongPhase { participant: ParticipantId, phase: Phase },
    #[error("{block} ({found}) does not match {expected} at slot {slot} of {owner}'s stack")]
    PatternMismatch {
        block: BlockId,
        owner: ParticipantId,
        slot: usize,
        expected: Color,
        found: Color,
    },
    #[error("slot {slot} is not the next slot of {owner}'s stack")]
    WrongSlot { owner: ParticipantId, slot: usize },
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("{agent} does not hold {block}")]
    NotHolder { agent: AgentId, block: BlockId },
    #[error("{agent} may not draw {block}")]
    NotPermitted { agent: AgentId, block: BlockId },
    #[error("{block} is destined for {serves}, not {owner}")]
    WrongStack {
        block: BlockId,
        serves: ParticipantId,
        owner: ParticipantId,
    },
    #[error(transparent)]
    Move(#[from] MoveError),
    #[error("{0} events do not change the world state")]
    NotStateChanging(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoveError {
    #[error("{participant} is in phase {phase:?}, not Puzzling")]
    WrongPhase { participant: ParticipantId, phase: Phase },
    #[error("move source holds no piece")]
    EmptySource,
    #[error("slot {0} is outside the grid")]
    InvalidSlot(usize),
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
}

/// Folds one state-changing event into the world. Pure: the input is not
/// modified and equal inputs give equal outputs.
pub fn apply_transition(state: &WorldState, event: &SessionEvent) -> Result<WorldState, TransitionError> {
    let mut next = match &event.body {
        EventBody::StartTask { participant } => start_task(state, participant)?,
        EventBody::Allocate { agent, block_id, .. } => allocate(state, agent, block_id)?,
        EventBody::Release { agent, block_id, .. } => release(state, agent, block_id)?,
        EventBody::StackPlaced { block_id, owner, slot } => place(state, block_id, owner, *slot)?,
        EventBody::PuzzleMove {
            participant,
            from,
            to_slot,
        } => move_piece(state, participant, from, *to_slot)?,
        other => return Err(TransitionError::NotStateChanging(other.kind())),
    };
    next.session_clock_ms = next.session_clock_ms.max(event.ts_ms);
    Ok(next)
}

fn phase_of(state: &WorldState, p: &ParticipantId) -> Result<Phase, TransitionError> {
    state
        .phase(p)
        .ok_or_else(|| TransitionError::UnknownParticipant(p.clone()))
}

fn start_task(state: &WorldState, p: &ParticipantId) -> Result<WorldState, TransitionError> {
    let phase = phase_of(state, p)?;
    if phase != Phase::AwaitingStart {
        return Err(TransitionError::WrongPhase {
            participant: p.clone(),
            phase,
        });
    }
    let mut next = state.clone();
    next.phases.insert(p.clone(), Phase::Puzzling);
    Ok(next)
}

/// Checks whether `agent` may claim `block` right now, without changing anything.
pub fn check_allocation(state: &WorldState, agent: &AgentId, block: &BlockId) -> Result<(), TransitionError> {
    let rec = state
        .block(block)
        .ok_or_else(|| TransitionError::UnknownBlock(block.clone()))?;
    if rec.state != ManipulationState::Unstacked {
        return Err(TransitionError::IllegalTransition {
            block: block.clone(),
            from: rec.state,
            to: ManipulationState::Working,
        });
    }
    let inv = state
        .config
        .inventory(&rec.inventory)
        .expect("block inventories come from the config");
    let permitted = match agent {
        AgentId::Robot => inv.access.contains(&InventoryAccess::Robot),
        AgentId::Human(p) => &inv.serves == p && inv.access.contains(&InventoryAccess::Human),
    };
    if !permitted {
        return Err(TransitionError::NotPermitted {
            agent: agent.clone(),
            block: block.clone(),
        });
    }
    let phase = phase_of(state, &inv.serves)?;
    if phase != Phase::Stacking {
        return Err(TransitionError::WrongPhase {
            participant: inv.serves.clone(),
            phase,
        });
    }
    let top = topmost_unstacked(state, &rec.inventory).expect("inventory exists");
    if top.as_ref() != Some(block) {
        return Err(TransitionError::NotTopmost { block: block.clone() });
    }
    Ok(())
}

fn allocate(state: &WorldState, agent: &AgentId, block: &BlockId) -> Result<WorldState, TransitionError> {
    check_allocation(state, agent, block)?;
    let mut next = state.clone();
    let rec = next.blocks.get_mut(block).expect("checked");
    rec.state = ManipulationState::Working;
    rec.manipulator = Some(agent.clone());
    Ok(next)
}

fn release(state: &WorldState, agent: &AgentId, block: &BlockId) -> Result<WorldState, TransitionError> {
    let rec = state
        .block(block)
        .ok_or_else(|| TransitionError::UnknownBlock(block.clone()))?;
    match rec.state {
        ManipulationState::Working if rec.manipulator.as_ref() == Some(agent) => {}
        ManipulationState::Working => {
            return Err(TransitionError::NotHolder {
                agent: agent.clone(),
                block: block.clone(),
            })
        }
        from => {
            return Err(TransitionError::IllegalTransition {
                block: block.clone(),
                from,
                to: ManipulationState::Unstacked,
            })
        }
    }
    let mut next = state.clone();
    let rec = next.blocks.get_mut(block).expect("checked");
    rec.state = ManipulationState::Unstacked;
    rec.manipulator = None;
    Ok(next)
}

fn place(
    state: &WorldState,
    block: &BlockId,
    owner: &ParticipantId,
    slot: usize,
) -> Result<WorldState, TransitionError> {
    let rec = state
        .block(block)
        .ok_or_else(|| TransitionError::UnknownBlock(block.clone()))?;
    if rec.state != ManipulationState::Working {
        return Err(TransitionError::IllegalTransition {
            block: block.clone(),
            from: rec.state,
            to: ManipulationState::Stacked,
        });
    }
    let serves = state.serves(block).expect("block inventories come from the config");
    if serves != owner {
        return Err(TransitionError::WrongStack {
            block: block.clone(),
            serves: serves.clone(),
            owner: owner.clone(),
        });
    }
    let phase = phase_of(state, owner)?;
    if phase != Phase::Stacking {
        return Err(TransitionError::WrongPhase {
            participant: owner.clone(),
            phase,
        });
    }
    let stack = &state.stacks[owner];
    if slot != stack.placed.len() {
        return Err(TransitionError::WrongSlot {
            owner: owner.clone(),
            slot,
        });
    }
    let expected = stack.pattern[slot];
    if rec.color != expected {
        return Err(TransitionError::PatternMismatch {
            block: block.clone(),
            owner: owner.clone(),
            slot,
            expected,
            found: rec.color,
        });
    }
    let mut next = state.clone();
    let rec = next.blocks.get_mut(block).expect("checked");
    rec.state = ManipulationState::Stacked;
    rec.stack_slot = Some(slot);
    let stack = next.stacks.get_mut(owner).expect("checked");
    stack.placed.push(block.clone());
    if stack.placed.len() == stack.pattern.len() {
        stack.state = StackState::Complete;
        next.phases.insert(owner.clone(), Phase::Done);
    }
    Ok(next)
}

/// Moves a puzzle piece onto a grid slot. An occupied destination swaps its
/// piece back to the source (the tray, or the source slot).
pub fn move_piece(
    state: &WorldState,
    participant: &ParticipantId,
    from: &PieceSource,
    to_slot: usize,
) -> Result<WorldState, TransitionError> {
    let phase = state
        .phase(participant)
        .ok_or_else(|| MoveError::UnknownParticipant(participant.clone()))?;
    if phase != Phase::Puzzling {
        return Err(MoveError::WrongPhase {
            participant: participant.clone(),
            phase,
        }
        .into());
    }
    let puzzle = &state.puzzles[participant];
    if to_slot >= puzzle.grid.len() {
        return Err(MoveError::InvalidSlot(to_slot).into());
    }
    let mut next = state.clone();
    let puzzle = next.puzzles.get_mut(participant).expect("checked");
    match from {
        PieceSource::Tray { piece } => {
            let pos = puzzle
                .tray
                .iter()
                .position(|p| p == piece)
                .ok_or(MoveError::EmptySource)?;
            let piece = puzzle.tray.remove(pos);
            if let Some(displaced) = puzzle.grid[to_slot].replace(piece) {
                puzzle.tray.push(displaced);
            }
        }
        PieceSource::Slot { index } => {
            let index = *index;
            if index >= puzzle.grid.len() {
                return Err(MoveError::InvalidSlot(index).into());
            }
            if puzzle.grid[index].is_none() {
                return Err(MoveError::EmptySource.into());
            }
            puzzle.grid.swap(index, to_slot);
        }
    }
    let solution = &state
        .config
        .puzzle_spec(participant)
        .expect("validated config has a puzzle per participant")
        .solution;
    puzzle.solved = puzzle
        .grid
        .iter()
        .zip(solution)
        .all(|(cell, want)| cell.as_ref() == Some(want));
    if puzzle.solved {
        next.phases.insert(participant.clone(), Phase::Stacking);
    }
    Ok(next)
}
