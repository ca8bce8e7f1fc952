use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentCtx, Effect, WorldView};
use crate::ids::{AgentId, BlockId, ParticipantId};
use crate::protocol::{
    ActionEnd, ActionStart, AllocationRequest, ClientRole, Hello, Message, Payload, PuzzleMove, StartTask,
    PROTOCOL_VERSION,
};
use crate::world_model::{
    topmost_unstacked, ActionKind, ActionOutcome, InventoryAccess, ManipulationState, Phase, PieceSource, WorldState,
};

/// Timing model of a scripted participant. Ranges are inclusive, in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAgentProfile {
    pub participant: ParticipantId,
    pub start_delay_ms: (u64, u64),
    /// Think time before each puzzle move.
    pub think_ms: (u64, u64),
    /// Walking to the block station and back, then placing.
    pub fetch_round_trip_ms: (u64, u64),
    /// Delay between noticing a block is needed and requesting it.
    pub react_ms: (u64, u64),
    pub seed: u64,
}

impl ScriptedAgentProfile {
    pub fn new(participant: ParticipantId, seed: u64) -> Self {
        ScriptedAgentProfile {
            participant,
            start_delay_ms: (500, 2000),
            think_ms: (800, 2500),
            fetch_round_trip_ms: (6000, 12000),
            react_ms: (200, 600),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Task {
    None,
    Deciding,
    Requesting(BlockId),
    Fetching(BlockId),
    Confirming(BlockId),
}

const START: u64 = 1;
const MOVE: u64 = 2;
const DECIDE: u64 = 3;
const FETCH: u64 = 4;

/// A participant that starts, solves its puzzle piece by piece in random
/// order and then fetches the blocks its stack needs.
#[derive(Debug)]
pub struct ScriptedHuman {
    profile: ScriptedAgentProfile,
    rng: ChaCha8Rng,
    view: WorldView,
    epoch: u64,
    start_pending: bool,
    move_pending: bool,
    plan: Option<VecDeque<usize>>,
    task: Task,
    finished: bool,
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (u64, u64)) -> u64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

impl ScriptedHuman {
    pub fn new(profile: ScriptedAgentProfile) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(profile.seed);
        ScriptedHuman {
            profile,
            rng,
            view: WorldView::default(),
            epoch: 0,
            start_pending: false,
            move_pending: false,
            plan: None,
            task: Task::None,
            finished: false,
        }
    }

    pub fn participant(&self) -> &ParticipantId {
        &self.profile.participant
    }

    fn me(&self) -> AgentId {
        AgentId::Human(self.profile.participant.clone())
    }

    fn timer(&mut self, ctx: &mut AgentCtx, range: (u64, u64), kind: u64) {
        let delay = sample(&mut self.rng, range);
        ctx.set_timer(delay, (self.epoch << 8) | kind);
    }

    /// The block this participant would fetch next, if it may fetch now.
    fn wanted_block(&self, world: &WorldState) -> Option<BlockId> {
        let me = &self.profile.participant;
        if world.phase(me) != Some(Phase::Stacking) || world.working_for(me).next().is_some() {
            return None;
        }
        let need = world.stacks.get(me)?.next_color()?;
        world
            .config
            .inventories
            .iter()
            .filter(|inv| inv.serves == *me && inv.access.contains(&InventoryAccess::Human))
            .filter_map(|inv| topmost_unstacked(world, &inv.id).ok().flatten())
            .find(|b| world.blocks[b].color == need)
    }

    fn step(&mut self, ctx: &mut AgentCtx) {
        if self.finished {
            return;
        }
        let Some(world) = self.view.world().cloned() else {
            return;
        };
        let me = self.profile.participant.clone();
        match world.phase(&me) {
            Some(Phase::AwaitingStart) => {
                if !self.start_pending {
                    self.start_pending = true;
                    self.timer(ctx, self.profile.start_delay_ms, START);
                }
            }
            Some(Phase::Puzzling) => {
                if self.plan.is_none() {
                    let puzzle = &world.puzzles[&me];
                    let solution = &world.config.puzzle_spec(&me).expect("validated config").solution;
                    let mut slots: Vec<usize> = (0..solution.len())
                        .filter(|&i| puzzle.grid.get(i).cloned().flatten().as_ref() != Some(&solution[i]))
                        .collect();
                    slots.shuffle(&mut self.rng);
                    self.plan = Some(slots.into());
                }
                if !self.move_pending && self.plan.as_ref().is_some_and(|p| !p.is_empty()) {
                    self.move_pending = true;
                    self.timer(ctx, self.profile.think_ms, MOVE);
                }
            }
            Some(Phase::Stacking) => {
                let me_agent = self.me();
                match self.task.clone() {
                    Task::None => {
                        if let Some(held) = world.held_by(&me_agent).next() {
                            self.task = Task::Fetching(held.block_id.clone());
                            self.timer(ctx, self.profile.fetch_round_trip_ms, FETCH);
                        } else if self.wanted_block(&world).is_some() {
                            self.task = Task::Deciding;
                            self.timer(ctx, self.profile.react_ms, DECIDE);
                        }
                    }
                    Task::Fetching(b) | Task::Confirming(b) => match world.block(&b).map(|r| r.state) {
                        Some(ManipulationState::Stacked) | Some(ManipulationState::Unstacked) => {
                            self.task = Task::None;
                            self.step(ctx);
                        }
                        _ => {}
                    },
                    Task::Deciding | Task::Requesting(_) => {}
                }
            }
            _ => {}
        }
    }

    fn on_move(&mut self, ctx: &mut AgentCtx) {
        self.move_pending = false;
        let Some(world) = self.view.world().cloned() else {
            return;
        };
        let me = self.profile.participant.clone();
        if world.phase(&me) != Some(Phase::Puzzling) {
            return;
        }
        let puzzle = &world.puzzles[&me];
        let solution = world
            .config
            .puzzle_spec(&me)
            .expect("validated config")
            .solution
            .clone();
        while let Some(slot) = self.plan.as_mut().and_then(VecDeque::pop_front) {
            let piece = &solution[slot];
            if puzzle.grid.get(slot).cloned().flatten().as_ref() == Some(piece) {
                continue;
            }
            let from = if puzzle.tray.contains(piece) {
                PieceSource::Tray { piece: piece.clone() }
            } else if let Some(index) = puzzle.grid.iter().position(|g| g.as_ref() == Some(piece)) {
                PieceSource::Slot { index }
            } else {
                continue;
            };
            ctx.send(Payload::PuzzleMove(PuzzleMove {
                participant: me.clone(),
                from,
                to_slot: slot,
            }));
            break;
        }
        if self.plan.as_ref().is_some_and(|p| !p.is_empty()) {
            self.move_pending = true;
            self.timer(ctx, self.profile.think_ms, MOVE);
        }
    }
}

impl Agent for ScriptedHuman {
    fn on_connect(&mut self, ctx: &mut AgentCtx) {
        self.epoch += 1;
        self.start_pending = false;
        self.move_pending = false;
        self.plan = None;
        self.task = Task::None;
        ctx.send(Payload::Hello(Hello {
            version: PROTOCOL_VERSION,
            role: ClientRole::Human {
                participant: self.profile.participant.clone(),
            },
        }));
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut AgentCtx) {
        match &msg.payload {
            Payload::ConfigPush(_) | Payload::StateUpdate(_) => {
                if self.view.observe(&msg.payload) {
                    self.step(ctx);
                }
            }
            Payload::AllocationResponse(r) if r.requester == self.me() => {
                if self.task != Task::Requesting(r.block_id.clone()) {
                    return;
                }
                if r.granted {
                    self.task = Task::Fetching(r.block_id.clone());
                    ctx.send(Payload::ActionStart(ActionStart {
                        agent: self.me(),
                        action: ActionKind::FetchPlace,
                        block_id: Some(r.block_id.clone()),
                    }));
                    self.timer(ctx, self.profile.fetch_round_trip_ms, FETCH);
                } else {
                    self.task = Task::None;
                    self.step(ctx);
                }
            }
            Payload::SessionEnd(_) => self.finished = true,
            _ => {}
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx) {
        if token >> 8 != self.epoch || self.finished {
            return;
        }
        match token & 0xff {
            START => {
                self.start_pending = false;
                let me = self.profile.participant.clone();
                if self.view.world().and_then(|w| w.phase(&me)) == Some(Phase::AwaitingStart) {
                    ctx.send(Payload::StartTask(StartTask { participant: me }));
                }
            }
            MOVE => self.on_move(ctx),
            DECIDE => {
                if self.task != Task::Deciding {
                    return;
                }
                let wanted = self.view.world().and_then(|w| self.wanted_block(w));
                match wanted {
                    Some(block_id) => {
                        self.task = Task::Requesting(block_id.clone());
                        ctx.send(Payload::AllocationRequest(AllocationRequest {
                            requester: self.me(),
                            block_id,
                        }));
                    }
                    None => self.task = Task::None,
                }
            }
            FETCH => {
                let Task::Fetching(block) = self.task.clone() else {
                    return;
                };
                let me = self.profile.participant.clone();
                ctx.effect(Effect::Place {
                    block: block.clone(),
                    owner: me.clone(),
                });
                ctx.send(Payload::ActionEnd(ActionEnd {
                    agent: self.me(),
                    action: ActionKind::FetchPlace,
                    block_id: Some(block.clone()),
                    outcome: ActionOutcome::Completed,
                    placed_on: Some(me),
                }));
                self.task = Task::Confirming(block);
            }
            _ => {}
        }
    }

    fn finished(&self) -> bool {
        self.finished
    }
}
