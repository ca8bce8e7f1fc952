//! Sans-IO agent interface shared by the robot teammate and scripted humans.
//! An agent reacts to messages and timers by filling an `AgentCtx`; a driver
//! (the simulation scheduler or a live socket loop) carries out the effects.

pub mod live;

use std::sync::Arc;

use crate::ids::{BlockId, ParticipantId};
use crate::protocol::{Message, Payload};
use crate::world_model::{new_session_shared, StateSnapshot, TaskConfig, WorldState};

/// A physical consequence of an action, applied to the ground-truth scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Place { block: BlockId, owner: ParticipantId },
}

/// Everything an agent may do in response to one stimulus.
#[derive(Debug, Default)]
pub struct AgentCtx {
    pub now: u64,
    pub outbox: Vec<Payload>,
    /// (delay in ms, token)
    pub timers: Vec<(u64, u64)>,
    pub effects: Vec<Effect>,
}

impl AgentCtx {
    pub fn new(now: u64) -> Self {
        AgentCtx {
            now,
            ..Default::default()
        }
    }

    pub fn send(&mut self, payload: Payload) {
        self.outbox.push(payload);
    }

    pub fn set_timer(&mut self, delay_ms: u64, token: u64) {
        self.timers.push((delay_ms, token));
    }

    pub fn effect(&mut self, effect: Effect) {
        self.effects.push(effect);
    }
}

pub trait Agent {
    /// Called once the connection is up, and again after every reconnect.
    fn on_connect(&mut self, ctx: &mut AgentCtx);
    fn on_message(&mut self, msg: &Message, ctx: &mut AgentCtx);
    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx);
    /// True once the agent has seen `SessionEnd`.
    fn finished(&self) -> bool;
}

/// A client's copy of the world, rebuilt from `ConfigPush` and `StateUpdate`.
#[derive(Debug, Default, Clone)]
pub struct WorldView {
    config: Option<Arc<TaskConfig>>,
    world: Option<WorldState>,
}

impl WorldView {
    /// Folds a server message into the view. Returns true if the state changed.
    pub fn observe(&mut self, payload: &Payload) -> bool {
        match payload {
            Payload::ConfigPush(c) => {
                let config = Arc::new(c.config.clone());
                self.world = new_session_shared(config.clone()).ok();
                self.config = Some(config);
                true
            }
            Payload::StateUpdate(u) => self.apply_snapshot(&u.state),
            _ => false,
        }
    }

    fn apply_snapshot(&mut self, snap: &StateSnapshot) -> bool {
        let Some(config) = self.config.clone() else {
            return false;
        };
        if self.world.as_ref().is_some_and(|w| w.snapshot() == *snap) {
            return false;
        }
        self.world = Some(WorldState::from_snapshot(config, snap.clone()));
        true
    }

    pub fn world(&self) -> Option<&WorldState> {
        self.world.as_ref()
    }
}
