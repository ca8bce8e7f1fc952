use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fault::FaultSpec;
use super::human::{ScriptedAgentProfile, ScriptedHuman};
use crate::agent::{Agent, AgentCtx, Effect};
use crate::coordination_server::{dispatch, ConnId, Coordinator, SessionLog, SessionOutcome, Transport};
use crate::fluency_metrics::{fluency_report, FluencyReport, MetricsOptions};
use crate::ids::{AgentId, ParticipantId};
use crate::perception::synthetic::{GroundTruth, SyntheticCamera};
use crate::perception::SceneModel;
use crate::protocol::{decode_message, encode_message, ClientRole, Hello, Payload, Sequencer, PROTOCOL_VERSION};
use crate::robot_agent::{RobotAgent, UnknownPolicy};
use crate::world_model::{ConfigError, TaskConfig, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Virtual time after which the run is abandoned.
    pub max_virtual_ms: u64,
    pub base_latency_ms: u64,
    pub jitter_ms: u64,
    pub tick_ms: u64,
    pub frame_period_ms: u64,
    pub noise_sigma_m: f64,
    pub max_occluded: usize,
    /// Per-participant overrides; participants without one get defaults.
    pub profiles: Vec<ScriptedAgentProfile>,
    /// Directory for `session.log` and `report.txt`.
    pub out_dir: Option<PathBuf>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            max_virtual_ms: 3_600_000,
            base_latency_ms: 2,
            jitter_ms: 8,
            tick_ms: 100,
            frame_period_ms: 250,
            noise_sigma_m: 0.002,
            max_occluded: 2,
            profiles: Vec::new(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioStatus {
    Success,
    Timeout,
    FaultUnrecoverable(String),
    Aborted(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] UnknownPolicy),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub status: ScenarioStatus,
    pub log: SessionLog,
    pub log_path: Option<PathBuf>,
    pub report: Option<FluencyReport>,
    pub robot_contributions: BTreeMap<ParticipantId, u32>,
    /// Largest contribution imbalance seen at any point in the run.
    pub max_imbalance: u32,
    pub robot_stop_reason: Option<String>,
    pub final_state: WorldState,
    pub virtual_ms: u64,
}

#[derive(Debug)]
enum Ev {
    ToServer { slot: usize, epoch: u64, bytes: Vec<u8> },
    ToClient { slot: usize, epoch: u64, bytes: Vec<u8> },
    Timer { slot: usize, epoch: u64, token: u64 },
    Tick,
    Frame,
    Disconnect { slot: usize },
    Reconnect { slot: usize },
}

struct Client {
    agent: Box<dyn Agent>,
    seq: Sequencer,
    conn: ConnId,
    connected: bool,
    epoch: u64,
}

struct Outgoing(Vec<(ConnId, Vec<u8>)>);

impl Transport for Outgoing {
    fn send_frame(&mut self, to: ConnId, frame: &[u8]) -> Result<(), String> {
        self.0.push((to, frame.to_vec()));
        Ok(())
    }
}

struct Sim {
    now: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    events: BTreeMap<u64, Ev>,
    next_id: u64,
    rng: ChaCha8Rng,
    /// Earliest next delivery per (slot, direction) to keep each link FIFO.
    link_clock: BTreeMap<(usize, bool), u64>,
    coord: Coordinator,
    clients: Vec<Client>,
    conn_slot: BTreeMap<ConnId, usize>,
    next_conn: ConnId,
    camera: SyntheticCamera,
    camera_rng: ChaCha8Rng,
    truth: GroundTruth,
    perception_conn: ConnId,
    perception_seq: Sequencer,
    opts: SimOptions,
    max_imbalance: u32,
}

impl Sim {
    fn schedule(&mut self, at: u64, ev: Ev) {
        let id = self.next_id;
        self.next_id += 1;
        self.events.insert(id, ev);
        self.queue.push(Reverse((at, id)));
    }

    fn latency(&mut self, slot: usize, to_server: bool) -> u64 {
        let jitter = if self.opts.jitter_ms == 0 {
            0
        } else {
            self.rng.gen_range(0..=self.opts.jitter_ms)
        };
        let at = self.now + self.opts.base_latency_ms + jitter;
        let link = self.link_clock.entry((slot, to_server)).or_insert(0);
        *link = (*link).max(at);
        *link
    }

    fn new_conn(&mut self) -> ConnId {
        let c = self.next_conn;
        self.next_conn += 1;
        self.coord.connect(c);
        c
    }

    fn run_agent(&mut self, slot: usize, f: impl FnOnce(&mut dyn Agent, &mut AgentCtx)) {
        let mut ctx = AgentCtx::new(self.now);
        f(self.clients[slot].agent.as_mut(), &mut ctx);
        let epoch = self.clients[slot].epoch;
        for payload in ctx.outbox {
            let msg = self.clients[slot].seq.stamp(self.now, payload);
            let bytes = encode_message(&msg).expect("agents emit valid messages");
            let at = self.latency(slot, true);
            self.schedule(at, Ev::ToServer { slot, epoch, bytes });
        }
        for (delay, token) in ctx.timers {
            self.schedule(self.now + delay, Ev::Timer { slot, epoch, token });
        }
        for effect in ctx.effects {
            match effect {
                Effect::Place { block, owner } => self.truth.place(&owner, block),
            }
        }
    }

    fn deliver(&mut self, outs: Vec<crate::coordination_server::Outbound>) {
        let mut sink = Outgoing(Vec::new());
        dispatch(outs, &mut sink);
        for (conn, bytes) in sink.0 {
            if let Some(&slot) = self.conn_slot.get(&conn) {
                let epoch = self.clients[slot].epoch;
                let at = self.latency(slot, false);
                self.schedule(at, Ev::ToClient { slot, epoch, bytes });
            }
        }
        let c = self.coord.world().contributions(&AgentId::Robot);
        let (lo, hi) = (
            c.values().min().copied().unwrap_or(0),
            c.values().max().copied().unwrap_or(0),
        );
        self.max_imbalance = self.max_imbalance.max(hi - lo);
    }

    fn connect_slot(&mut self, slot: usize) {
        let conn = self.new_conn();
        let c = &mut self.clients[slot];
        c.conn = conn;
        c.connected = true;
        c.epoch += 1;
        c.seq = Sequencer::new();
        self.conn_slot.insert(conn, slot);
        self.run_agent(slot, |a, ctx| a.on_connect(ctx));
    }

    fn step(&mut self, ev: Ev) {
        match ev {
            Ev::ToServer { slot, epoch, bytes } => {
                if self.clients[slot].epoch != epoch || !self.clients[slot].connected {
                    return;
                }
                let conn = self.clients[slot].conn;
                let outs = match decode_message(&bytes) {
                    Ok(msg) => self.coord.handle(conn, msg, self.now),
                    Err(e) => self.coord.reject(conn, "decode_error", e.to_string()),
                };
                self.deliver(outs);
            }
            Ev::ToClient { slot, epoch, bytes } => {
                if self.clients[slot].epoch != epoch || !self.clients[slot].connected {
                    return;
                }
                let msg = decode_message(&bytes).expect("server emits valid frames");
                self.run_agent(slot, |a, ctx| a.on_message(&msg, ctx));
            }
            Ev::Timer { slot, epoch, token } => {
                if self.clients[slot].epoch == epoch && self.clients[slot].connected {
                    self.run_agent(slot, |a, ctx| a.on_timer(token, ctx));
                }
            }
            Ev::Tick => {
                let outs = self.coord.tick(self.now);
                self.deliver(outs);
                self.schedule(self.now + self.opts.tick_ms, Ev::Tick);
            }
            Ev::Frame => {
                let (frame, _) = self.camera.render(&self.truth, self.now, &mut self.camera_rng);
                let msg = self.perception_seq.stamp(self.now, Payload::DetectionFrame(frame));
                let bytes = encode_message(&msg).expect("frames encode");
                let outs = match decode_message(&bytes) {
                    Ok(m) => self.coord.handle(self.perception_conn, m, self.now),
                    Err(e) => self.coord.reject(self.perception_conn, "decode_error", e.to_string()),
                };
                self.deliver(outs);
                self.schedule(self.now + self.opts.frame_period_ms, Ev::Frame);
            }
            Ev::Disconnect { slot } => {
                if !self.clients[slot].connected {
                    return;
                }
                self.clients[slot].connected = false;
                self.clients[slot].epoch += 1;
                let conn = self.clients[slot].conn;
                let outs = self.coord.disconnect(conn, self.now);
                self.deliver(outs);
            }
            Ev::Reconnect { slot } => {
                if !self.clients[slot].connected {
                    self.connect_slot(slot);
                }
            }
        }
    }
}

/// Seed for the scripted participant at position `i`.
fn participant_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1)
}

/// Runs a full session headless under a virtual clock: the coordinator, the
/// robot, one scripted participant per configured participant and a synthetic
/// camera, all exchanging encoded frames through a seeded event scheduler.
pub fn run_scenario(
    config: &TaskConfig,
    seed: u64,
    faults: &[FaultSpec],
    opts: &SimOptions,
) -> Result<ScenarioResult, ScenarioError> {
    let mut config = config.clone();
    config.seed = seed;
    let coord = Coordinator::new(config.clone(), 0)?;
    let scene = SceneModel::from_config(&config);

    let mut robot = RobotAgent::new(&config.robot_policy)?;
    for f in faults {
        if let FaultSpec::RobotFault { action } = f {
            robot = robot.with_fault_after_pick(*action);
        }
    }
    let mut clients: Vec<Client> = vec![Client {
        agent: Box::new(robot),
        seq: Sequencer::new(),
        conn: 0,
        connected: false,
        epoch: 0,
    }];
    let mut slot_of: BTreeMap<AgentId, usize> = BTreeMap::new();
    slot_of.insert(AgentId::Robot, 0);
    for (i, p) in config.participants.iter().enumerate() {
        let profile = opts
            .profiles
            .iter()
            .find(|pr| pr.participant == *p)
            .cloned()
            .unwrap_or_else(|| ScriptedAgentProfile::new(p.clone(), participant_seed(seed, i)));
        slot_of.insert(AgentId::Human(p.clone()), clients.len());
        clients.push(Client {
            agent: Box::new(ScriptedHuman::new(profile)),
            seq: Sequencer::new(),
            conn: 0,
            connected: false,
            epoch: 0,
        });
    }

    let mut sim = Sim {
        now: 0,
        queue: BinaryHeap::new(),
        events: BTreeMap::new(),
        next_id: 0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        link_clock: BTreeMap::new(),
        coord,
        clients,
        conn_slot: BTreeMap::new(),
        next_conn: 1,
        camera: SyntheticCamera::new(scene, opts.noise_sigma_m, opts.max_occluded),
        camera_rng: ChaCha8Rng::seed_from_u64(seed ^ 0xca3e_7a00),
        truth: GroundTruth::default(),
        perception_conn: 0,
        perception_seq: Sequencer::new(),
        opts: opts.clone(),
        max_imbalance: 0,
    };

    sim.perception_conn = sim.new_conn();
    let hello = sim.perception_seq.stamp(
        0,
        Payload::Hello(Hello {
            version: PROTOCOL_VERSION,
            role: ClientRole::Perception,
        }),
    );
    let outs = sim.coord.handle(sim.perception_conn, hello, 0);
    drop(outs);
    for slot in 0..sim.clients.len() {
        sim.connect_slot(slot);
    }
    sim.schedule(opts.tick_ms, Ev::Tick);
    sim.schedule(opts.frame_period_ms, Ev::Frame);

    let mut unrecoverable = None;
    for f in faults {
        if let FaultSpec::Disconnect {
            agent,
            at_ms,
            reconnect_at_ms,
        } = f
        {
            let Some(&slot) = slot_of.get(agent) else {
                tracing::warn!(%agent, "fault names an agent that is not in this scenario");
                continue;
            };
            sim.schedule(*at_ms, Ev::Disconnect { slot });
            match reconnect_at_ms {
                Some(t) => sim.schedule(*t, Ev::Reconnect { slot }),
                None => unrecoverable = Some(format!("{agent} disconnected at {at_ms} ms and never returned")),
            }
        }
    }

    while !sim.coord.is_finished() {
        let Some(Reverse((at, id))) = sim.queue.pop() else {
            break;
        };
        if at > opts.max_virtual_ms {
            sim.now = opts.max_virtual_ms;
            break;
        }
        sim.now = at;
        let ev = sim.events.remove(&id).expect("scheduled event");
        sim.step(ev);
    }
    if !sim.coord.is_finished() {
        let outs = sim.coord.finish(
            SessionOutcome::Stopped("virtual time limit".into()),
            "virtual time limit reached",
        );
        drop(outs);
    }

    let outcome = sim.coord.outcome().cloned().expect("finished");
    let status = match outcome {
        SessionOutcome::Completed => ScenarioStatus::Success,
        SessionOutcome::Stopped(_) => match unrecoverable {
            Some(why) => ScenarioStatus::FaultUnrecoverable(why),
            None => ScenarioStatus::Timeout,
        },
        SessionOutcome::ClientLost(who) => ScenarioStatus::Aborted(format!("client lost: {who}")),
        SessionOutcome::PerceptionStall => ScenarioStatus::Aborted("perception stall".into()),
    };
    let final_state = sim.coord.world().clone();
    let robot_contributions = final_state.contributions(&AgentId::Robot);
    let robot_stop_reason = sim.coord.log().events().iter().rev().find_map(|e| match &e.body {
        crate::world_model::EventBody::RobotStop { reason, .. } => Some(reason.clone()),
        _ => None,
    });
    let virtual_ms = sim.now;
    let max_imbalance = sim.max_imbalance;
    let log = sim.coord.into_log();
    let report = match fluency_report(log.events(), &MetricsOptions::default()) {
        Ok(r) => Some(r),
        Err(e) => {
            tracing::warn!("fluency report unavailable: {e}");
            None
        }
    };
    let log_path = match &opts.out_dir {
        Some(dir) => Some(write_outputs(dir, &log, report.as_ref())?),
        None => None,
    };
    Ok(ScenarioResult {
        status,
        log,
        log_path,
        report,
        robot_contributions,
        max_imbalance,
        robot_stop_reason,
        final_state,
        virtual_ms,
    })
}

fn write_outputs(dir: &Path, log: &SessionLog, report: Option<&FluencyReport>) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("session.log");
    log.write_to(&path)?;
    if let Some(r) = report {
        std::fs::write(
            dir.join("report.txt"),
            crate::fluency_metrics::render(r, crate::fluency_metrics::ReportFormat::Table),
        )?;
    }
    Ok(path)
}

/// Loads a scenario config (with or without the `.toml` suffix) and runs it.
pub fn run_scenario_path(
    config_path: impl AsRef<Path>,
    seed: u64,
    faults: &[FaultSpec],
    opts: &SimOptions,
) -> Result<ScenarioResult, ScenarioError> {
    let config = TaskConfig::load(config_path)?;
    run_scenario(&config, seed, faults, opts)
}
