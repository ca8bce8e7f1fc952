use std::collections::BTreeSet;

use super::planner::{plan_waypoints, PlanError, WaypointPlan};
use super::policy::{policy_for, Action, ActionPhase, ActiveAction, RobotPolicy, RobotPolicyState, UnknownPolicy};
use crate::agent::{Agent, AgentCtx, Effect, WorldView};
use crate::ids::AgentId;
use crate::protocol::{
    ActionEnd, ActionStart, AllocationRequest, ClientRole, Hello, Message, Payload, ReleaseBlock, RobotStop,
    PROTOCOL_VERSION,
};
use crate::world_model::{ActionKind, ActionOutcome, ManipulationState, ReleaseCause, Timing};

const PICK_DONE: u64 = 1;
const PLACE_DONE: u64 = 2;
const RETRY: u64 = 3;
const RETRY_MS: u64 = 250;

/// The simulated robot teammate as a protocol client.
#[derive(Debug)]
pub struct RobotAgent {
    policy: Box<dyn RobotPolicy>,
    timing: Option<Timing>,
    view: WorldView,
    state: Option<RobotPolicyState>,
    plan: Option<WaypointPlan>,
    /// Indices of granted actions that fault right after the pick.
    faults: BTreeSet<u32>,
    grants: u32,
    stale_replans: u32,
    stopped: Option<String>,
    finished: bool,
    retry_armed: bool,
}

impl RobotAgent {
    pub fn new(policy: &str) -> Result<RobotAgent, UnknownPolicy> {
        Ok(RobotAgent {
            policy: policy_for(policy)?,
            timing: None,
            view: WorldView::default(),
            state: None,
            plan: None,
            faults: BTreeSet::new(),
            grants: 0,
            stale_replans: 0,
            stopped: None,
            finished: false,
            retry_armed: false,
        })
    }

    /// Overrides the pick and place durations pushed by the server.
    pub fn with_timing(mut self, timing: Timing) -> Self {
        self.timing = Some(timing);
        self
    }

    /// Makes the `n`-th granted action (0-based) fault after the pick.
    pub fn with_fault_after_pick(mut self, n: u32) -> Self {
        self.faults.insert(n);
        self
    }

    pub fn policy_state(&self) -> Option<&RobotPolicyState> {
        self.state.as_ref()
    }

    pub fn stop_reason(&self) -> Option<&str> {
        self.stopped.as_deref()
    }

    pub fn stale_replans(&self) -> u32 {
        self.stale_replans
    }

    pub fn last_plan(&self) -> Option<&WaypointPlan> {
        self.plan.as_ref()
    }

    fn timing(&self) -> Timing {
        self.timing
            .or_else(|| self.view.world().map(|w| w.config.timing))
            .unwrap_or_default()
    }

    fn decide(&mut self, ctx: &mut AgentCtx) {
        if self.stopped.is_some() || self.finished {
            return;
        }
        let Some(world) = self.view.world() else { return };
        let state = self
            .state
            .get_or_insert_with(|| RobotPolicyState::new(&world.config.participants));
        if state.active_action.is_some() {
            return;
        }
        state.sync(world);
        match self.policy.select_action(world, state) {
            Action::StackFor { beneficiary, block_id } => {
                let stack_len = world.stacks[&beneficiary].placed.len();
                tracing::debug!(%block_id, %beneficiary, "robot requests block");
                state.active_action = Some(ActiveAction {
                    block_id: block_id.clone(),
                    beneficiary,
                    phase: ActionPhase::Requesting,
                    stack_len,
                });
                ctx.send(Payload::AllocationRequest(AllocationRequest {
                    requester: AgentId::Robot,
                    block_id,
                }));
            }
            Action::Idle => {}
            Action::Stop { reason } => {
                tracing::info!(%reason, "robot stops");
                let contributed = state.contributed.clone();
                self.stopped = Some(reason.clone());
                ctx.send(Payload::RobotStop(RobotStop { reason, contributed }));
            }
        }
    }

    fn on_response(&mut self, granted: bool, block: &crate::ids::BlockId, ctx: &mut AgentCtx) {
        let Some(state) = self.state.as_mut() else { return };
        let Some(active) = state.active_action.as_mut() else {
            return;
        };
        if active.block_id != *block || active.phase != ActionPhase::Requesting {
            return;
        }
        if !granted {
            state.active_action = None;
            if !self.retry_armed {
                self.retry_armed = true;
                ctx.set_timer(RETRY_MS, RETRY);
            }
            return;
        }
        let Some(world) = self.view.world() else { return };
        let plan = match plan_waypoints(world, &active.beneficiary, &active.block_id, active.stack_len) {
            Err(PlanError::StaleState { actual, .. }) => {
                self.stale_replans += 1;
                tracing::debug!(actual, "stack changed since allocation, replanning");
                active.stack_len = actual;
                plan_waypoints(world, &active.beneficiary, &active.block_id, actual)
            }
            other => other,
        };
        match plan {
            Ok(plan) => self.plan = Some(plan),
            Err(e) => tracing::warn!("planning failed: {e}"),
        }
        active.phase = ActionPhase::Picking;
        ctx.send(Payload::ActionStart(ActionStart {
            agent: AgentId::Robot,
            action: ActionKind::PickPlace,
            block_id: Some(active.block_id.clone()),
        }));
        let pick = self.timing().robot_pick_ms;
        ctx.set_timer(pick, PICK_DONE);
    }

    fn on_pick_done(&mut self, ctx: &mut AgentCtx) {
        let fault = self.faults.contains(&self.grants);
        let place_ms = self.timing().robot_place_ms;
        let Some(state) = self.state.as_mut() else { return };
        let Some(active) = state.active_action.as_mut() else {
            return;
        };
        if active.phase != ActionPhase::Picking {
            return;
        }
        if fault {
            self.grants += 1;
            let block = active.block_id.clone();
            state.active_action = None;
            tracing::info!(%block, "injected fault after pick");
            ctx.send(Payload::ActionEnd(ActionEnd {
                agent: AgentId::Robot,
                action: ActionKind::PickPlace,
                block_id: Some(block.clone()),
                outcome: ActionOutcome::Faulted,
                placed_on: None,
            }));
            ctx.send(Payload::ReleaseBlock(ReleaseBlock {
                agent: AgentId::Robot,
                block_id: block,
                cause: Some(ReleaseCause::Fault),
            }));
            return;
        }
        active.phase = ActionPhase::Placing;
        ctx.set_timer(place_ms, PLACE_DONE);
    }

    fn on_place_done(&mut self, ctx: &mut AgentCtx) {
        let Some(state) = self.state.as_mut() else { return };
        let Some(active) = state.active_action.as_mut() else {
            return;
        };
        if active.phase != ActionPhase::Placing {
            return;
        }
        self.grants += 1;
        active.phase = ActionPhase::Confirming;
        ctx.effect(Effect::Place {
            block: active.block_id.clone(),
            owner: active.beneficiary.clone(),
        });
        ctx.send(Payload::ActionEnd(ActionEnd {
            agent: AgentId::Robot,
            action: ActionKind::PickPlace,
            block_id: Some(active.block_id.clone()),
            outcome: ActionOutcome::Completed,
            placed_on: Some(active.beneficiary.clone()),
        }));
    }

    /// Clears the active action once the world shows it resolved.
    fn reconcile_active(&mut self) {
        let Some(world) = self.view.world() else { return };
        let Some(state) = self.state.as_mut() else { return };
        let Some(active) = state.active_action.clone() else {
            return;
        };
        let Some(rec) = world.block(&active.block_id) else {
            return;
        };
        match (active.phase, rec.state) {
            (ActionPhase::Confirming, ManipulationState::Stacked) => {
                state.active_action = None;
                state.served(world, &active.beneficiary);
            }
            (ActionPhase::Picking | ActionPhase::Placing | ActionPhase::Confirming, ManipulationState::Unstacked) => {
                tracing::warn!(block = %active.block_id, "robot's block was released by the server");
                state.active_action = None;
            }
            _ => {}
        }
    }
}

impl Agent for RobotAgent {
    fn on_connect(&mut self, ctx: &mut AgentCtx) {
        if let Some(state) = self.state.as_mut() {
            if state
                .active_action
                .as_ref()
                .is_some_and(|a| a.phase == ActionPhase::Requesting)
            {
                state.active_action = None;
            }
        }
        ctx.send(Payload::Hello(Hello {
            version: PROTOCOL_VERSION,
            role: ClientRole::Robot,
        }));
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut AgentCtx) {
        match &msg.payload {
            Payload::ConfigPush(_) | Payload::StateUpdate(_) => {
                if self.view.observe(&msg.payload) {
                    self.reconcile_active();
                    self.decide(ctx);
                }
            }
            Payload::AllocationResponse(r) if r.requester == AgentId::Robot => {
                self.on_response(r.granted, &r.block_id, ctx);
            }
            Payload::SessionEnd(_) => self.finished = true,
            Payload::Error(e) => tracing::warn!(code = %e.code, "server error: {}", e.message),
            _ => {}
        }
    }

    fn on_timer(&mut self, token: u64, ctx: &mut AgentCtx) {
        if self.finished {
            return;
        }
        match token {
            PICK_DONE => self.on_pick_done(ctx),
            PLACE_DONE => self.on_place_done(ctx),
            RETRY => {
                self.retry_armed = false;
                self.decide(ctx);
            }
            _ => {}
        }
    }

    fn finished(&self) -> bool {
        self.finished
    }
}
