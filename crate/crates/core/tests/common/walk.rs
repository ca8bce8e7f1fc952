//! Random event sequences over the world model and an independent acceptance
//! oracle for every state-changing event.

use std::collections::BTreeMap;

use cohrt_core::ids::{Actor, AgentId, BlockId, ParticipantId, PieceId};
use cohrt_core::world_model::{
    apply_transition, new_session, EventBody, InventoryAccess, ManipulationState, Phase, PieceSource, SessionEvent,
    TaskConfig, WorldState,
};
use rand::seq::SliceRandom;
use rand::Rng;

fn agents(cfg: &TaskConfig) -> Vec<AgentId> {
    std::iter::once(AgentId::Robot)
        .chain(cfg.participants.iter().cloned().map(AgentId::Human))
        .collect()
}

fn any_block<R: Rng>(rng: &mut R, s: &WorldState) -> BlockId {
    if rng.gen_bool(0.05) {
        return BlockId::new("no-such-block");
    }
    s.blocks
        .keys()
        .collect::<Vec<_>>()
        .choose(rng)
        .map(|b| (*b).clone())
        .expect("blocks")
}

fn any_participant<R: Rng>(rng: &mut R, s: &WorldState) -> ParticipantId {
    s.config.participants.choose(rng).cloned().expect("participants")
}

/// One random state-changing event. About half are chosen to be plausible
/// (topmost blocks, next slots, solving moves) so walks reach deep states.
pub fn random_event<R: Rng>(rng: &mut R, s: &WorldState, ts: u64) -> SessionEvent {
    let cfg = &s.config;
    let smart = rng.gen_bool(0.6);
    let body = match rng.gen_range(0..5) {
        0 => EventBody::StartTask {
            participant: any_participant(rng, s),
        },
        1 => {
            let agent = agents(cfg).choose(rng).cloned().expect("agents");
            let block_id = if smart {
                let inv = cfg.inventories.choose(rng).expect("inventories");
                inv.blocks
                    .iter()
                    .find(|b| s.blocks[*b].state == ManipulationState::Unstacked)
                    .cloned()
                    .unwrap_or_else(|| any_block(rng, s))
            } else {
                any_block(rng, s)
            };
            EventBody::Allocate {
                agent,
                block_id,
                receipt: rng.gen(),
            }
        }
        2 => {
            let working: Vec<_> = s
                .blocks
                .values()
                .filter(|b| b.state == ManipulationState::Working)
                .collect();
            match working.choose(rng) {
                Some(b) if smart => EventBody::Release {
                    agent: b.manipulator.clone().expect("working blocks have a holder"),
                    block_id: b.block_id.clone(),
                    cause: cohrt_core::world_model::ReleaseCause::Explicit,
                },
                _ => EventBody::Release {
                    agent: agents(cfg).choose(rng).cloned().expect("agents"),
                    block_id: any_block(rng, s),
                    cause: cohrt_core::world_model::ReleaseCause::Explicit,
                },
            }
        }
        3 => {
            let working: Vec<_> = s
                .blocks
                .values()
                .filter(|b| b.state == ManipulationState::Working)
                .collect();
            match working.choose(rng) {
                Some(b) if smart => {
                    let owner = s.serves(&b.block_id).cloned().expect("served");
                    let slot = s.stacks[&owner].placed.len();
                    EventBody::StackPlaced {
                        block_id: b.block_id.clone(),
                        owner,
                        slot,
                    }
                }
                _ => EventBody::StackPlaced {
                    block_id: any_block(rng, s),
                    owner: any_participant(rng, s),
                    slot: rng.gen_range(0..9),
                },
            }
        }
        _ => {
            let participant = any_participant(rng, s);
            let spec = cfg.puzzle_spec(&participant).expect("puzzle");
            let puzzle = &s.puzzles[&participant];
            if smart && !puzzle.tray.is_empty() {
                let piece = puzzle.tray.choose(rng).cloned().expect("tray");
                let to_slot = spec
                    .solution
                    .iter()
                    .position(|p| *p == piece)
                    .expect("piece in solution");
                EventBody::PuzzleMove {
                    participant,
                    from: PieceSource::Tray { piece },
                    to_slot,
                }
            } else {
                let from = if rng.gen_bool(0.5) {
                    PieceSource::Slot {
                        index: rng.gen_range(0..spec.slots() + 2),
                    }
                } else {
                    let piece = spec.solution.choose(rng).cloned().unwrap_or_else(|| PieceId::new("x"));
                    PieceSource::Tray { piece }
                };
                EventBody::PuzzleMove {
                    participant,
                    from,
                    to_slot: rng.gen_range(0..spec.slots() + 2),
                }
            }
        }
    };
    SessionEvent::new(ts, Actor::Server, body)
}

/// Whether `event` should be accepted from `s`, decided from first principles.
pub fn oracle_accepts(s: &WorldState, event: &SessionEvent) -> bool {
    let cfg = &s.config;
    match &event.body {
        EventBody::StartTask { participant } => s.phases.get(participant) == Some(&Phase::AwaitingStart),
        EventBody::Allocate { agent, block_id, .. } => {
            let Some(b) = s.blocks.get(block_id) else {
                return false;
            };
            let inv = cfg.inventories.iter().find(|i| i.id == b.inventory).expect("inventory");
            let permitted = match agent {
                AgentId::Robot => inv.access.contains(&InventoryAccess::Robot),
                AgentId::Human(p) => *p == inv.serves && inv.access.contains(&InventoryAccess::Human),
            };
            let first_unstacked = inv
                .blocks
                .iter()
                .find(|id| s.blocks[*id].state == ManipulationState::Unstacked);
            b.state == ManipulationState::Unstacked
                && permitted
                && s.phases[&inv.serves] == Phase::Stacking
                && first_unstacked == Some(block_id)
        }
        EventBody::Release { agent, block_id, .. } => s
            .blocks
            .get(block_id)
            .is_some_and(|b| b.state == ManipulationState::Working && b.manipulator.as_ref() == Some(agent)),
        EventBody::StackPlaced { block_id, owner, slot } => {
            let Some(b) = s.blocks.get(block_id) else {
                return false;
            };
            let inv = cfg.inventories.iter().find(|i| i.id == b.inventory).expect("inventory");
            let Some(stack) = s.stacks.get(owner) else {
                return false;
            };
            b.state == ManipulationState::Working
                && inv.serves == *owner
                && s.phases[owner] == Phase::Stacking
                && *slot == stack.placed.len()
                && stack.pattern.get(*slot) == Some(&b.color)
        }
        EventBody::PuzzleMove {
            participant,
            from,
            to_slot,
        } => {
            let Some(p) = s.puzzles.get(participant) else {
                return false;
            };
            let source_ok = match from {
                PieceSource::Tray { piece } => p.tray.contains(piece),
                PieceSource::Slot { index } => p.grid.get(*index).is_some_and(Option::is_some),
            };
            s.phases[participant] == Phase::Puzzling && *to_slot < p.grid.len() && source_ok
        }
        _ => false,
    }
}

/// Block-state edges a single accepted event may produce.
pub fn legal_edge(from: ManipulationState, to: ManipulationState) -> bool {
    use ManipulationState::*;
    from == to
        || matches!(
            (from, to),
            (Unstacked, Working) | (Working, Unstacked) | (Working, Stacked)
        )
}

pub fn legal_phase_step(from: Phase, to: Phase) -> bool {
    use Phase::*;
    from == to
        || matches!(
            (from, to),
            (AwaitingStart, Puzzling) | (Puzzling, Stacking) | (Stacking, Done)
        )
}

/// Checks everything an accepted event must preserve. Returns the first problem.
pub fn check_step(prev: &WorldState, event: &SessionEvent, next: &WorldState) -> Result<(), String> {
    let mut changed = 0;
    for (id, a) in &prev.blocks {
        let b = next.blocks.get(id).ok_or_else(|| format!("{id} vanished"))?;
        if a.state != b.state {
            changed += 1;
            if !legal_edge(a.state, b.state) {
                return Err(format!("{id}: illegal edge {:?} -> {:?}", a.state, b.state));
            }
        }
    }
    if changed > 1 {
        return Err(format!("{changed} blocks changed state in one event"));
    }
    for (p, a) in &prev.phases {
        let b = next.phases[p];
        if !legal_phase_step(*a, b) {
            return Err(format!("{p}: illegal phase step {a:?} -> {b:?}"));
        }
    }
    if let EventBody::Allocate { block_id, .. } = &event.body {
        let inv = &prev.blocks[block_id].inventory;
        let pile = &prev
            .config
            .inventories
            .iter()
            .find(|i| &i.id == inv)
            .expect("inventory")
            .blocks;
        let depth = pile.iter().position(|b| b == block_id).expect("in pile");
        if pile[..depth]
            .iter()
            .any(|b| prev.blocks[b].state == ManipulationState::Unstacked)
        {
            return Err(format!("{block_id} claimed from under an unstacked block"));
        }
    }
    for s in next.stacks.values() {
        let colors: Vec<_> = s.placed.iter().map(|b| next.blocks[b].color).collect();
        if !s.pattern.starts_with(&colors) {
            return Err(format!("stack of {} is not a prefix of its pattern", s.owner));
        }
    }
    let mut tally: BTreeMap<&BlockId, usize> = BTreeMap::new();
    for inv in &next.config.inventories {
        for b in &inv.blocks {
            if next.blocks[b].state != ManipulationState::Stacked {
                *tally.entry(b).or_default() += 1;
            }
        }
    }
    for s in next.stacks.values() {
        for b in &s.placed {
            *tally.entry(b).or_default() += 1;
        }
    }
    let catalog: BTreeMap<&BlockId, usize> = next.config.blocks.iter().map(|b| (&b.id, 1)).collect();
    if tally != catalog {
        return Err("block-id multiset not conserved".into());
    }
    next.check_invariants()
}

/// Outcome counts of a batch of random walks.
#[derive(Debug, Default, Clone, Copy)]
pub struct WalkStats {
    pub sequences: usize,
    pub events: usize,
    pub accepted: usize,
    pub violations: usize,
    pub oracle_disagreements: usize,
    pub placements: usize,
}

/// Runs one random walk of `len` events from `initial`, checking every step.
pub fn walk<R: Rng>(rng: &mut R, initial: WorldState, len: usize, stats: &mut WalkStats, problems: &mut Vec<String>) {
    let mut s = initial;
    stats.sequences += 1;
    for t in 0..len {
        let ev = random_event(rng, &s, t as u64);
        stats.events += 1;
        let expect = oracle_accepts(&s, &ev);
        match apply_transition(&s, &ev) {
            Ok(next) => {
                stats.accepted += 1;
                if matches!(ev.body, EventBody::StackPlaced { .. }) {
                    stats.placements += 1;
                }
                if !expect {
                    stats.oracle_disagreements += 1;
                    problems.push(format!("accepted but oracle rejects: {:?}", ev.body));
                }
                if let Err(e) = check_step(&s, &ev, &next) {
                    stats.violations += 1;
                    problems.push(e);
                }
                s = next;
            }
            Err(e) => {
                if expect {
                    stats.oracle_disagreements += 1;
                    problems.push(format!("rejected ({e}) but oracle accepts: {:?}", ev.body));
                }
            }
        }
    }
}

/// A state reached by `steps` random accepted events.
pub fn random_state<R: Rng>(rng: &mut R, cfg: &TaskConfig, steps: usize) -> WorldState {
    let mut s = new_session(cfg.clone()).expect("valid config");
    for t in 0..steps {
        let ev = random_event(rng, &s, t as u64);
        if let Ok(next) = apply_transition(&s, &ev) {
            s = next;
        }
    }
    s
}

/// Every participant started and solved their puzzle.
pub fn stacking_state(cfg: &TaskConfig) -> WorldState {
    let mut s = new_session(cfg.clone()).expect("valid config");
    for spec in &cfg.puzzles {
        let p = spec.participant.clone();
        s = apply_transition(
            &s,
            &SessionEvent::new(0, Actor::Server, EventBody::StartTask { participant: p.clone() }),
        )
        .expect("start");
        for (slot, piece) in spec.solution.iter().enumerate() {
            let ev = SessionEvent::new(
                0,
                Actor::Server,
                EventBody::PuzzleMove {
                    participant: p.clone(),
                    from: PieceSource::Tray { piece: piece.clone() },
                    to_slot: slot,
                },
            );
            s = apply_transition(&s, &ev).expect("solving move");
        }
    }
    s
}
