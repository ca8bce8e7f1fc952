//! The single serialization point: every mutation of the world state and
//! every log append happens inside a `Coordinator` method. Transports feed it
//! decoded messages and deliver what it returns.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::log::{state_digest, SessionLog};
use crate::ids::{Actor, AgentId, BlockId};
use crate::perception::synthetic::{GroundTruth, SyntheticCamera};
use crate::perception::{
    infer_stacks, reconcile, DetectionFrame, Finding, ObservationHistory, PerceptionError, SceneModel,
};
use crate::protocol::{
    AllocationRequest, AllocationResponse, ClientRole, ConfigPush, ErrorBody, Message, Payload, SeqTracker, Sequencer,
    SessionEnd, StateUpdate, PROTOCOL_VERSION,
};
use crate::world_model::{
    apply_transition, is_session_done, new_session, ConfigError, DenyReason, EventBody, Phase, ReleaseCause,
    SessionEvent, StateSnapshot, TaskConfig, TransitionError, WorldState,
};

pub type ConnId = u64;

/// A message addressed to one connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: ConnId,
    pub msg: Message,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    Completed,
    ClientLost(String),
    PerceptionStall,
    Stopped(String),
}

impl SessionOutcome {
    pub fn is_success(&self) -> bool {
        *self == SessionOutcome::Completed
    }
}

#[derive(Debug)]
struct Conn {
    role: Option<ClientRole>,
    out: Sequencer,
    inbound: SeqTracker,
    alive: bool,
}

/// Server-side stand-in for a camera in live sessions: blocks reported as
/// placed in `ActionEnd` are rendered into detection frames on each tick.
#[derive(Debug)]
struct LiveCamera {
    camera: SyntheticCamera,
    truth: GroundTruth,
    rng: ChaCha8Rng,
    period_ms: u64,
    last_ms: Option<u64>,
}

#[derive(Debug)]
pub struct Coordinator {
    world: WorldState,
    log: SessionLog,
    conns: BTreeMap<ConnId, Conn>,
    next_receipt: u64,
    claims: BTreeMap<BlockId, u64>,
    scene: SceneModel,
    history: ObservationHistory,
    last_frame_at: Option<u64>,
    last_frame_ts: Option<u64>,
    stacking_since: Option<u64>,
    last_broadcast: Option<StateSnapshot>,
    outcome: Option<SessionOutcome>,
    camera: Option<LiveCamera>,
    now: u64,
}

fn deny_reason(err: &TransitionError) -> DenyReason {
    match err {
        TransitionError::IllegalTransition { .. } => DenyReason::AlreadyClaimed,
        TransitionError::NotTopmost { .. } => DenyReason::NotTopmost,
        TransitionError::WrongPhase { .. } => DenyReason::WrongPhase,
        TransitionError::UnknownBlock(_) => DenyReason::UnknownBlock,
        _ => DenyReason::NotPermitted,
    }
}

impl Coordinator {
    /// Validates the config and opens the log with `SessionStart`.
    pub fn new(config: TaskConfig, now: u64) -> Result<Coordinator, ConfigError> {
        let world = new_session(config.clone())?;
        let scene = SceneModel::from_config(&config);
        let history = ObservationHistory::new(scene.history_depth);
        let mut log = SessionLog::new();
        log.append(SessionEvent::new(
            now,
            Actor::Server,
            EventBody::SessionStart { config },
        ));
        Ok(Coordinator {
            world,
            log,
            conns: BTreeMap::new(),
            next_receipt: 0,
            claims: BTreeMap::new(),
            scene,
            history,
            last_frame_at: None,
            last_frame_ts: None,
            stacking_since: None,
            last_broadcast: None,
            outcome: None,
            camera: None,
            now,
        })
    }

    /// Renders blocks placed via `ActionEnd.placed_on` into detection frames
    /// every `period_ms`, for sessions without a perception client.
    pub fn enable_synthetic_perception(&mut self, period_ms: u64, noise_sigma_m: f64) {
        let seed = self.world.config.seed;
        self.camera = Some(LiveCamera {
            camera: SyntheticCamera::new(self.scene.clone(), noise_sigma_m, 0),
            truth: GroundTruth::default(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe),
            period_ms: period_ms.max(1),
            last_ms: None,
        });
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn outcome(&self) -> Option<&SessionOutcome> {
        self.outcome.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    fn advance(&mut self, now: u64) {
        self.now = self.now.max(now);
    }

    pub fn connect(&mut self, conn: ConnId) {
        self.conns.insert(
            conn,
            Conn {
                role: None,
                out: Sequencer::new(),
                inbound: SeqTracker::default(),
                alive: true,
            },
        );
    }

    fn send(&mut self, to: ConnId, payload: Payload) -> Option<Outbound> {
        let now = self.now;
        let c = self.conns.get_mut(&to)?;
        if !c.alive {
            return None;
        }
        Some(Outbound {
            to,
            msg: c.out.stamp(now, payload),
        })
    }

    /// Builds an `Error` reply for `to`.
    pub fn reject(&mut self, to: ConnId, code: &str, message: impl Into<String>) -> Vec<Outbound> {
        self.send(
            to,
            Payload::Error(ErrorBody {
                code: code.into(),
                message: message.into(),
            }),
        )
        .into_iter()
        .collect()
    }

    fn record(&mut self, actor: impl Into<Actor>, body: EventBody) {
        self.log.append(SessionEvent::new(self.now, actor, body));
    }

    /// Applies and logs a state-changing event, plus any phase changes it causes.
    fn transition(&mut self, actor: impl Into<Actor>, body: EventBody) -> Result<(), TransitionError> {
        let event = SessionEvent::new(self.now, actor, body);
        let next = apply_transition(&self.world, &event)?;
        match &event.body {
            EventBody::Allocate { block_id, .. } => {
                self.claims.insert(block_id.clone(), self.now);
            }
            EventBody::Release { block_id, .. } | EventBody::StackPlaced { block_id, .. } => {
                self.claims.remove(block_id);
            }
            _ => {}
        }
        let changed: Vec<_> = next
            .phases
            .iter()
            .filter(|(p, ph)| self.world.phases.get(*p) != Some(ph))
            .map(|(p, ph)| (p.clone(), *ph))
            .collect();
        self.log.append(event);
        self.world = next;
        for (participant, phase) in changed {
            if phase == Phase::Stacking && self.stacking_since.is_none() {
                self.stacking_since = Some(self.now);
            }
            self.record(Actor::Server, EventBody::PhaseChange { participant, phase });
        }
        Ok(())
    }

    fn live_conns(&self) -> Vec<ConnId> {
        self.conns
            .iter()
            .filter(|(_, c)| c.alive && c.role.is_some())
            .map(|(id, _)| *id)
            .collect()
    }

    fn agent_alive(&self, agent: &AgentId) -> bool {
        self.conns
            .values()
            .any(|c| c.alive && c.role.as_ref().and_then(ClientRole::agent).as_ref() == Some(agent))
    }

    /// Sends a full-state snapshot to every registered client, if the state
    /// changed since the last broadcast.
    pub fn broadcast_state(&mut self) -> Vec<Outbound> {
        let snap = self.world.snapshot();
        if self.last_broadcast.as_ref() == Some(&snap) {
            return Vec::new();
        }
        self.last_broadcast = Some(snap.clone());
        let targets = self.live_conns();
        targets
            .into_iter()
            .filter_map(|to| self.send(to, Payload::StateUpdate(StateUpdate { state: snap.clone() })))
            .collect()
    }

    /// Broadcasts changes and closes the session once the task is done.
    fn settle(&mut self, mut out: Vec<Outbound>) -> Vec<Outbound> {
        if self.outcome.is_some() {
            return out;
        }
        out.extend(self.broadcast_state());
        if is_session_done(&self.world) {
            out.extend(self.finish(SessionOutcome::Completed, "all puzzles solved and all stacks complete"));
        }
        out
    }

    /// Ends the session: logs `SessionEnd` with integrity digests and tells every client.
    pub fn finish(&mut self, outcome: SessionOutcome, reason: &str) -> Vec<Outbound> {
        if self.outcome.is_some() {
            return Vec::new();
        }
        let done = is_session_done(&self.world);
        let mut out = self.broadcast_state();
        let state_digest = state_digest(&self.world.snapshot());
        self.log.seal(self.now, done, reason, state_digest);
        self.outcome = Some(outcome);
        for to in self.live_conns() {
            out.extend(self.send(
                to,
                Payload::SessionEnd(SessionEnd {
                    done,
                    reason: reason.to_owned(),
                }),
            ));
        }
        out
    }

    /// Arbitrates one allocation request. Requests are numbered in the order
    /// they reach this method; the first request for a free topmost block wins
    /// and every later one for it is denied until the block is released.
    pub fn handle_allocation(&mut self, req: AllocationRequest, now: u64) -> (AllocationResponse, Vec<Outbound>) {
        self.advance(now);
        self.next_receipt += 1;
        let receipt = self.next_receipt;
        let body = EventBody::Allocate {
            agent: req.requester.clone(),
            block_id: req.block_id.clone(),
            receipt,
        };
        let response = match self.transition(req.requester.clone(), body) {
            Ok(()) => AllocationResponse {
                requester: req.requester,
                block_id: req.block_id,
                granted: true,
                reason: None,
                receipt,
            },
            Err(err) => {
                let reason = deny_reason(&err);
                self.record(
                    req.requester.clone(),
                    EventBody::AllocationDenied {
                        agent: req.requester.clone(),
                        block_id: req.block_id.clone(),
                        receipt,
                        reason,
                    },
                );
                AllocationResponse {
                    requester: req.requester,
                    block_id: req.block_id,
                    granted: false,
                    reason: Some(reason),
                    receipt,
                }
            }
        };
        let out = if response.granted {
            self.settle(Vec::new())
        } else {
            Vec::new()
        };
        (response, out)
    }

    /// Returns a Working block to its pile. Only its holder may release it.
    pub fn handle_release(
        &mut self,
        agent: &AgentId,
        block: &BlockId,
        cause: ReleaseCause,
        now: u64,
    ) -> Result<Vec<Outbound>, TransitionError> {
        self.advance(now);
        let actor = match cause {
            ReleaseCause::Timeout | ReleaseCause::ClientLost => Actor::Server,
            _ => Actor::Agent(agent.clone()),
        };
        self.transition(
            actor,
            EventBody::Release {
                agent: agent.clone(),
                block_id: block.clone(),
                cause,
            },
        )?;
        Ok(self.settle(Vec::new()))
    }

    /// Infers stacks from a frame, reconciles them and applies the placements.
    pub fn handle_detection_frame(
        &mut self,
        frame: &DetectionFrame,
        now: u64,
    ) -> Result<Vec<Outbound>, PerceptionError> {
        self.advance(now);
        self.last_frame_at = Some(self.now);
        if self.last_frame_ts.is_some_and(|t| frame.ts_ms < t) {
            return Ok(Vec::new());
        }
        self.last_frame_ts = Some(frame.ts_ms);
        let observations = infer_stacks(frame, &self.scene)?;
        let findings = reconcile(&self.world, &observations, &mut self.history)?;
        for f in findings {
            match f {
                Finding::Placed { block_id, owner, slot } => {
                    let body = EventBody::StackPlaced {
                        block_id: block_id.clone(),
                        owner: owner.clone(),
                        slot,
                    };
                    if let Err(err) = self.transition(Actor::Perception, body) {
                        let expected = self.world.stacks.get(&owner).and_then(|s| s.pattern.get(slot).copied());
                        self.record(
                            Actor::Perception,
                            EventBody::Mismatch {
                                owner,
                                slot,
                                block_id: Some(block_id),
                                expected,
                                detail: err.to_string(),
                            },
                        );
                    }
                }
                Finding::Mismatch(m) => self.record(
                    Actor::Perception,
                    EventBody::Mismatch {
                        owner: m.owner,
                        slot: m.slot,
                        block_id: m.block_id,
                        expected: m.expected,
                        detail: m.detail,
                    },
                ),
            }
        }
        Ok(self.settle(Vec::new()))
    }

    /// Handles a connection going away.
    pub fn disconnect(&mut self, conn: ConnId, now: u64) -> Vec<Outbound> {
        self.advance(now);
        let Some(c) = self.conns.get_mut(&conn) else {
            return Vec::new();
        };
        if !c.alive {
            return Vec::new();
        }
        c.alive = false;
        let Some(role) = c.role.clone() else {
            return Vec::new();
        };
        if self.outcome.is_some() {
            return Vec::new();
        }
        let label = role.label();
        self.record(Actor::Server, EventBody::ClientLost { client: label.clone() });
        if role.agent().is_some() && self.world.config.session.abort_on_client_loss {
            return self.finish(
                SessionOutcome::ClientLost(label.clone()),
                &format!("client lost: {label}"),
            );
        }
        Vec::new()
    }

    /// Periodic housekeeping: abandoned-claim release, perception watchdog and
    /// the optional synthetic camera.
    pub fn tick(&mut self, now: u64) -> Vec<Outbound> {
        self.advance(now);
        if self.outcome.is_some() {
            return Vec::new();
        }
        let mut out = Vec::new();
        let timeout = self.world.config.session.working_timeout_ms;
        let expired: Vec<BlockId> = self
            .claims
            .iter()
            .filter(|(_, t)| self.now.saturating_sub(**t) >= timeout)
            .map(|(b, _)| b.clone())
            .collect();
        for block in expired {
            let Some(holder) = self.world.block(&block).and_then(|b| b.manipulator.clone()) else {
                self.claims.remove(&block);
                continue;
            };
            let cause = if self.agent_alive(&holder) {
                ReleaseCause::Timeout
            } else {
                ReleaseCause::ClientLost
            };
            if let Ok(o) = self.handle_release(&holder, &block, cause, now) {
                out.extend(o);
            }
        }

        if let Some(cam) = self.camera.as_mut() {
            if cam.last_ms.is_none_or(|t| self.now >= t + cam.period_ms) {
                cam.last_ms = Some(self.now);
                let (frame, _) = cam.camera.render(&cam.truth, self.now, &mut cam.rng);
                match self.handle_detection_frame(&frame, now) {
                    Ok(o) => out.extend(o),
                    Err(e) => tracing::warn!("synthetic frame rejected: {e}"),
                }
            }
        }

        let watchdog = self.world.config.session.perception_watchdog_ms;
        if watchdog > 0 && self.outcome.is_none() {
            if let Some(since) = self.stacking_since {
                let last = self.last_frame_at.map_or(since, |f| f.max(since));
                if self.now.saturating_sub(last) > watchdog {
                    out.extend(self.finish(
                        SessionOutcome::PerceptionStall,
                        &format!("no detection frame for {watchdog} ms"),
                    ));
                }
            }
        }
        out
    }

    /// Processes one decoded message from `conn`. The message's own timestamp
    /// is advisory; everything is stamped with `now`.
    pub fn handle(&mut self, conn: ConnId, msg: Message, now: u64) -> Vec<Outbound> {
        self.advance(now);
        if self.outcome.is_some() {
            return Vec::new();
        }
        let Some(c) = self.conns.get_mut(&conn) else {
            return Vec::new();
        };
        if let Err(e) = c.inbound.observe(msg.seq) {
            return self.reject(conn, "out_of_order", e.to_string());
        }
        let role = c.role.clone();
        let Some(role) = role else {
            return match msg.payload {
                Payload::Hello(h) => self.hello(conn, h.version, h.role),
                _ => self.reject(conn, "hello_required", "send Hello first"),
            };
        };
        let agent = role.agent();
        match msg.payload {
            Payload::Hello(_) => self.reject(conn, "already_registered", "connection already sent Hello"),
            Payload::Heartbeat(_) => Vec::new(),
            Payload::StartTask(s) => {
                if agent != Some(AgentId::Human(s.participant.clone())) {
                    return self.reject(conn, "forbidden", "only a participant can start their own task");
                }
                match self.transition(
                    Actor::Agent(AgentId::Human(s.participant.clone())),
                    EventBody::StartTask {
                        participant: s.participant,
                    },
                ) {
                    Ok(()) => self.settle(Vec::new()),
                    Err(e) => self.reject(conn, "start_rejected", e.to_string()),
                }
            }
            Payload::AllocationRequest(req) => {
                if agent.as_ref() != Some(&req.requester) {
                    return self.reject(conn, "forbidden", "requester does not match connection role");
                }
                let (resp, rest) = self.handle_allocation(req, now);
                let mut out: Vec<Outbound> = self.send(conn, Payload::AllocationResponse(resp)).into_iter().collect();
                out.extend(rest);
                out
            }
            Payload::ReleaseBlock(r) => {
                if agent.as_ref() != Some(&r.agent) {
                    return self.reject(conn, "forbidden", "agent does not match connection role");
                }
                let cause = match r.cause {
                    Some(ReleaseCause::Fault) => ReleaseCause::Fault,
                    None | Some(ReleaseCause::Explicit) => ReleaseCause::Explicit,
                    Some(other) => {
                        return self.reject(
                            conn,
                            "forbidden",
                            format!("clients cannot report release cause {other:?}"),
                        )
                    }
                };
                match self.handle_release(&r.agent, &r.block_id, cause, now) {
                    Ok(out) => out,
                    Err(e) => self.reject(conn, "not_holder", e.to_string()),
                }
            }
            Payload::PuzzleMove(m) => {
                if agent != Some(AgentId::Human(m.participant.clone())) {
                    return self.reject(conn, "forbidden", "only a participant can move their own pieces");
                }
                let body = EventBody::PuzzleMove {
                    participant: m.participant.clone(),
                    from: m.from,
                    to_slot: m.to_slot,
                };
                match self.transition(AgentId::Human(m.participant), body) {
                    Ok(()) => self.settle(Vec::new()),
                    Err(e) => self.reject(conn, "move_rejected", e.to_string()),
                }
            }
            Payload::DetectionFrame(frame) => {
                if role != ClientRole::Perception {
                    return self.reject(conn, "forbidden", "only perception clients send detection frames");
                }
                match self.handle_detection_frame(&frame, now) {
                    Ok(out) => out,
                    Err(e) => {
                        tracing::warn!("detection frame rejected: {e}");
                        self.reject(conn, "frame_rejected", e.to_string())
                    }
                }
            }
            Payload::ActionStart(a) => {
                if agent.as_ref() != Some(&a.agent) {
                    return self.reject(conn, "forbidden", "agent does not match connection role");
                }
                self.record(
                    a.agent.clone(),
                    EventBody::ActionStart {
                        agent: a.agent,
                        action: a.action,
                        block_id: a.block_id,
                    },
                );
                Vec::new()
            }
            Payload::ActionEnd(a) => {
                if agent.as_ref() != Some(&a.agent) {
                    return self.reject(conn, "forbidden", "agent does not match connection role");
                }
                if let (Some(cam), Some(owner), Some(block)) = (self.camera.as_mut(), &a.placed_on, &a.block_id) {
                    cam.truth.place(owner, block.clone());
                }
                self.record(
                    a.agent.clone(),
                    EventBody::ActionEnd {
                        agent: a.agent,
                        action: a.action,
                        block_id: a.block_id,
                        outcome: a.outcome,
                    },
                );
                Vec::new()
            }
            Payload::RobotStop(s) => {
                if agent != Some(AgentId::Robot) {
                    return self.reject(conn, "forbidden", "only the robot reports a stop");
                }
                self.record(
                    AgentId::Robot,
                    EventBody::RobotStop {
                        reason: s.reason,
                        contributed: s.contributed,
                    },
                );
                Vec::new()
            }
            other => self.reject(
                conn,
                "unexpected_kind",
                format!("{} is not accepted from clients", other.kind().as_str()),
            ),
        }
    }

    fn hello(&mut self, conn: ConnId, version: u32, role: ClientRole) -> Vec<Outbound> {
        if version != PROTOCOL_VERSION {
            return self.reject(
                conn,
                "version_mismatch",
                format!("server speaks version {PROTOCOL_VERSION}, client sent {version}"),
            );
        }
        if let ClientRole::Human { participant } = &role {
            if !self.world.config.participants.contains(participant) {
                return self.reject(conn, "unknown_participant", format!("no participant {participant}"));
            }
        }
        if let Some(agent) = role.agent() {
            if self.agent_alive(&agent) {
                return self.reject(conn, "role_taken", format!("{agent} is already connected"));
            }
        }
        let label = role.label();
        if let Some(c) = self.conns.get_mut(&conn) {
            c.role = Some(role);
        }
        self.record(Actor::Server, EventBody::ClientJoined { client: label });
        let config = (*self.world.config).clone();
        let snap = self.world.snapshot();
        let mut out: Vec<Outbound> = self
            .send(conn, Payload::ConfigPush(ConfigPush { config }))
            .into_iter()
            .collect();
        out.extend(self.send(conn, Payload::StateUpdate(StateUpdate { state: snap })));
        out
    }
}
