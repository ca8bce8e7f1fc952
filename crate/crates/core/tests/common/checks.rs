//! One function per acceptance criterion. Each runs at the scale it is given
//! and reports a verdict with the numbers behind it.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use cohrt_core::coordination_server::{Coordinator, LoadedLog};
use cohrt_core::fluency_metrics::{concurrent_activity, fluency_report, functional_delay, idle_time, MetricsOptions};
use cohrt_core::ids::{Actor, AgentId, BlockId, ParticipantId};
use cohrt_core::perception::synthetic::{GroundTruth, SyntheticCamera};
use cohrt_core::perception::{infer_stacks, reconcile, Finding, ObservationHistory, SceneModel};
use cohrt_core::protocol::{
    decode_message, encode_message, AllocationRequest, ClientRole, Hello, Message, Payload, PuzzleMove, Sequencer,
    StartTask, PROTOCOL_VERSION,
};
use cohrt_core::sim_harness::{replay, run_scenario, FaultSpec, ScenarioResult, ScenarioStatus, SimOptions};
use cohrt_core::world_model::{
    apply_transition, minimal_config, new_session, reference_config, topmost_unstacked, ActionKind, ActionOutcome,
    DenyReason, EventBody, PieceSource, ReleaseCause, SessionEvent, TaskConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gen::sample_messages;
use super::walk::{stacking_state, walk, WalkStats};

/// Verdict on one criterion.
#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Check {
        Check {
            pass,
            detail: detail.into(),
        }
    }
}

// ---------------------------------------------------------------- helpers

/// Sends stamped messages to a `Coordinator` on behalf of one connection.
pub struct TestClient {
    pub conn: u64,
    seq: Sequencer,
}

impl TestClient {
    pub fn join(coord: &mut Coordinator, conn: u64, role: ClientRole) -> (TestClient, Vec<Message>) {
        coord.connect(conn);
        let mut c = TestClient {
            conn,
            seq: Sequencer::new(),
        };
        let out = c.send(
            coord,
            Payload::Hello(Hello {
                version: PROTOCOL_VERSION,
                role,
            }),
        );
        (c, out)
    }

    /// Stamps the next outgoing message of this client.
    pub fn stamp(&mut self, now: u64, payload: Payload) -> Message {
        self.seq.stamp(now, payload)
    }

    /// Sends one message and returns what the coordinator addressed to this connection.
    pub fn send(&mut self, coord: &mut Coordinator, payload: Payload) -> Vec<Message> {
        let now = coord.now();
        let msg = self.seq.stamp(now, payload);
        coord
            .handle(self.conn, msg, now)
            .into_iter()
            .filter(|o| o.to == self.conn)
            .map(|o| o.msg)
            .collect()
    }
}

/// A coordinator in which every participant has solved their puzzle.
pub fn coordinator_in_stacking(cfg: TaskConfig) -> (Coordinator, Vec<TestClient>) {
    let mut coord = Coordinator::new(cfg.clone(), 0).expect("valid config");
    let mut clients = Vec::new();
    for (i, spec) in cfg.puzzles.iter().enumerate() {
        let p = spec.participant.clone();
        let (mut c, _) = TestClient::join(&mut coord, 100 + i as u64, ClientRole::Human { participant: p.clone() });
        c.send(&mut coord, Payload::StartTask(StartTask { participant: p.clone() }));
        for (slot, piece) in spec.solution.iter().enumerate() {
            c.send(
                &mut coord,
                Payload::PuzzleMove(PuzzleMove {
                    participant: p.clone(),
                    from: PieceSource::Tray { piece: piece.clone() },
                    to_slot: slot,
                }),
            );
        }
        clients.push(c);
    }
    (coord, clients)
}

pub fn scenario(seed: u64, faults: &[FaultSpec]) -> ScenarioResult {
    run_scenario(&reference_config(seed), seed, faults, &SimOptions::default()).expect("scenario runs")
}

/// The fault schedules exercised by the determinism and replay checks.
pub fn fault_schedules() -> Vec<Vec<FaultSpec>> {
    vec![
        vec![],
        vec!["disconnect:P2@30000+reconnect@45000".parse().expect("fault")],
        vec!["robot-fault:1".parse().expect("fault")],
        vec!["disconnect:robot@20000+reconnect@26000".parse().expect("fault")],
    ]
}

// ---------------------------------------------------------------- AC1

pub fn ac1_mutual_exclusion(trials: usize, threads: usize) -> Check {
    let start = Instant::now();
    let (coord, _) = coordinator_in_stacking(reference_config(1));
    let block = {
        let inv = &coord.world().config.inventories[0];
        topmost_unstacked(coord.world(), &inv.id)
            .expect("inventory")
            .expect("block")
    };
    let owner = coord.world().serves(&block).cloned().expect("served");
    let coord = Arc::new(Mutex::new(coord));
    let go = Arc::new(Barrier::new(threads + 1));
    let done = Arc::new(Barrier::new(threads + 1));
    let results = Arc::new(Mutex::new(Vec::with_capacity(threads)));
    let mut violations = Vec::new();
    let mut trial_errors = 0usize;

    std::thread::scope(|scope| {
        for t in 0..threads {
            let (coord, go, done, results, block) =
                (coord.clone(), go.clone(), done.clone(), results.clone(), block.clone());
            let requester = if t % 2 == 0 {
                AgentId::Robot
            } else {
                AgentId::Human(owner.clone())
            };
            scope.spawn(move || {
                for trial in 0..trials {
                    go.wait();
                    let req = AllocationRequest {
                        requester: requester.clone(),
                        block_id: block.clone(),
                    };
                    let (resp, _) = coord.lock().expect("lock").handle_allocation(req, trial as u64 * 10);
                    results.lock().expect("lock").push(resp);
                    done.wait();
                }
            });
        }
        for trial in 0..trials {
            go.wait();
            done.wait();
            let rs: Vec<_> = std::mem::take(&mut *results.lock().expect("lock"));
            let grants: Vec<_> = rs.iter().filter(|r| r.granted).collect();
            let denials = rs
                .iter()
                .filter(|r| !r.granted && r.reason == Some(DenyReason::AlreadyClaimed))
                .count();
            let receipts: BTreeSet<u64> = rs.iter().map(|r| r.receipt).collect();
            let mut c = coord.lock().expect("lock");
            let mut bad = Vec::new();
            if grants.len() != 1 || denials != threads - 1 {
                bad.push(format!("trial {trial}: {} grants, {denials} denials", grants.len()));
            }
            if receipts.len() != rs.len() {
                bad.push(format!("trial {trial}: duplicate receipts"));
            }
            if let Err(e) = c.world().check_invariants() {
                bad.push(format!("trial {trial}: {e}"));
            }
            if let Some(g) = grants.first() {
                let rec = c.world().block(&block).expect("block");
                if rec.manipulator.as_ref() != Some(&g.requester) {
                    bad.push(format!("trial {trial}: holder differs from grantee"));
                }
                let later_win = rs.iter().any(|r| !r.granted && r.receipt < g.receipt);
                if later_win {
                    bad.push(format!("trial {trial}: an earlier request was denied"));
                }
                if c.handle_release(&g.requester, &block, ReleaseCause::Explicit, trial as u64 * 10 + 5)
                    .is_err()
                {
                    bad.push(format!("trial {trial}: grantee could not release"));
                }
            }
            if !bad.is_empty() {
                trial_errors += 1;
                violations.extend(bad);
            }
        }
    });
    let elapsed = start.elapsed();
    let pass = trial_errors == 0 && elapsed < Duration::from_secs(60);
    let mut detail = format!(
        "{trials} trials x {threads} concurrent requests: {} trials with exactly 1 grant and {} denials, {} violations, {:.1} s",
        trials - trial_errors,
        threads - 1,
        violations.len(),
        elapsed.as_secs_f64()
    );
    if let Some(v) = violations.first() {
        detail.push_str(&format!("; first: {v}"));
    }
    Check::new(pass, detail)
}

// ---------------------------------------------------------------- AC2

pub fn ac2_reference_scenario() -> Check {
    let start = Instant::now();
    let r = scenario(42, &[]);
    let elapsed = start.elapsed();
    let stacks_done = r.final_state.stacks.values().all(|s| s.is_complete());
    let puzzles_done = r.final_state.puzzles.values().all(|p| p.solved);
    let counts: Vec<u32> = r.robot_contributions.values().copied().collect();
    let equal = counts.windows(2).all(|w| w[0] == w[1]);
    let pass = r.status == ScenarioStatus::Success
        && stacks_done
        && puzzles_done
        && equal
        && r.max_imbalance <= 1
        && elapsed < Duration::from_secs(10);
    let contributions: Vec<String> = r
        .robot_contributions
        .iter()
        .map(|(p, n)| format!("{}={n}", p.0))
        .collect();
    Check::new(
        pass,
        format!(
            "status {:?}, stacks complete {stacks_done}, puzzles solved {puzzles_done}, robot contributions {}, max imbalance {}, {} ms virtual, {:.2} s wall",
            r.status,
            contributions.join(" "),
            r.max_imbalance,
            r.virtual_ms,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- AC3

pub fn ac3_determinism(seeds: &[u64]) -> Check {
    let mut runs = 0;
    let mut differing = Vec::new();
    for &seed in seeds {
        for faults in fault_schedules() {
            let a = scenario(seed, &faults);
            let b = scenario(seed, &faults);
            runs += 1;
            if a.log.as_bytes() != b.log.as_bytes() {
                differing.push(format!("seed {seed} faults {faults:?}"));
            }
        }
    }
    let detail = format!(
        "{runs} (config, seed, faults) triples run twice: {} byte-identical log pairs{}",
        runs - differing.len(),
        differing
            .first()
            .map(|d| format!("; first difference: {d}"))
            .unwrap_or_default()
    );
    Check::new(differing.is_empty(), detail)
}

// ---------------------------------------------------------------- AC4

/// Single-event mutations of one log line. Every variant must be rejected.
pub fn mutate_line(frames: &[Vec<u8>], i: usize, variant: usize) -> Option<Vec<u8>> {
    let mut lines: Vec<Vec<u8>> = frames.to_vec();
    match variant {
        0 => {
            lines.remove(i);
        }
        1 => {
            let dup = lines[i].clone();
            lines.insert(i, dup);
        }
        2 => {
            if i + 1 >= lines.len() {
                return None;
            }
            lines.swap(i, i + 1);
        }
        3 => {
            let mut v: serde_json::Value = serde_json::from_slice(&lines[i]).ok()?;
            let ts = v["ts"].as_u64()?;
            v["ts"] = serde_json::json!(ts + 1);
            lines[i] = line_of(&v);
        }
        _ => {
            let mut v: serde_json::Value = serde_json::from_slice(&lines[i]).ok()?;
            if !perturb_first_leaf(&mut v["payload"]) {
                return None;
            }
            lines[i] = line_of(&v);
        }
    }
    Some(lines.concat())
}

fn line_of(v: &serde_json::Value) -> Vec<u8> {
    let mut b = serde_json::to_vec(v).expect("serialize");
    b.push(b'\n');
    b
}

fn perturb_first_leaf(v: &mut serde_json::Value) -> bool {
    use serde_json::Value;
    match v {
        Value::Bool(b) => {
            *b = !*b;
            true
        }
        Value::Number(n) => {
            *v = match n.as_u64() {
                Some(u) => serde_json::json!(u + 1),
                None => serde_json::json!(n.as_f64().unwrap_or(0.0) + 0.5),
            };
            true
        }
        Value::String(s) => {
            s.push('x');
            true
        }
        Value::Array(a) => a.iter_mut().any(perturb_first_leaf),
        Value::Object(o) => o.values_mut().any(perturb_first_leaf),
        Value::Null => false,
    }
}

fn rejected(bytes: &[u8]) -> bool {
    match LoadedLog::parse(bytes) {
        Err(_) => true,
        Ok(log) => replay(&log).is_err(),
    }
}

pub fn ac4_replay(seeds: &[u64], mutation_seed: u64) -> Check {
    let mut runs = 0;
    let mut mismatches = Vec::new();
    let mut mutation_target = None;
    for &seed in seeds {
        for faults in fault_schedules() {
            let r = scenario(seed, &faults);
            runs += 1;
            let ok = LoadedLog::parse(r.log.as_bytes())
                .ok()
                .and_then(|l| replay(&l).ok())
                .is_some_and(|w| w.snapshot() == r.final_state.snapshot());
            if !ok {
                mismatches.push(format!("seed {seed} faults {faults:?}"));
            }
            if seed == mutation_seed && faults.is_empty() {
                mutation_target = Some(r.log.as_bytes().to_vec());
            }
        }
    }
    let target = mutation_target.unwrap_or_else(|| scenario(mutation_seed, &[]).log.as_bytes().to_vec());
    let frames = LoadedLog::parse(&target).expect("harness log parses").frames;
    let mut mutations = 0;
    let mut undetected = Vec::new();
    for i in 0..frames.len() {
        for variant in 0..5 {
            if let Some(bytes) = mutate_line(&frames, i, variant) {
                mutations += 1;
                if !rejected(&bytes) {
                    undetected.push(format!("line {} variant {variant}", i + 1));
                }
            }
        }
    }
    let pass = mismatches.is_empty() && undetected.is_empty();
    Check::new(
        pass,
        format!(
            "{runs} harness runs: {} replays match the final state; {mutations} single-event mutations of a {}-event log: {} detected{}",
            runs - mismatches.len(),
            frames.len(),
            mutations - undetected.len(),
            undetected.first().map(|u| format!("; first undetected: {u}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- AC5

pub fn ac5_state_machine(sequences: usize, len: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let configs = [reference_config(5), minimal_config(5)];
    let mut stats = WalkStats::default();
    let mut problems = Vec::new();
    for i in 0..sequences {
        let cfg = &configs[usize::from(i % 10 == 9)];
        let initial = if i % 3 == 0 {
            stacking_state(cfg)
        } else {
            new_session(cfg.clone()).expect("valid config")
        };
        walk(&mut rng, initial, len, &mut stats, &mut problems);
    }
    let pass = stats.violations == 0 && stats.oracle_disagreements == 0 && stats.placements > 0;
    Check::new(
        pass,
        format!(
            "{} sequences, {} events, {} accepted ({} placements): {} invariant violations, {} disagreements with the acceptance oracle{}",
            stats.sequences,
            stats.events,
            stats.accepted,
            stats.placements,
            stats.violations,
            stats.oracle_disagreements,
            problems.first().map(|p| format!("; first: {p}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- AC6

#[derive(Debug, Default, Clone, Copy)]
pub struct PerceptionStats {
    pub frames: usize,
    pub eligible: usize,
    pub correct_eligible: usize,
    pub occluded_detections: usize,
    pub errors: usize,
}

/// Builds stacks one block at a time, renders noisy occluded frames and
/// folds the reconciled placements into the world.
pub fn perception_scene(seed: u64, sigma: f64, max_occluded: usize, stats: &mut PerceptionStats) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = reference_config(seed);
    let scene = SceneModel::from_config(&cfg);
    let depth = scene.history_depth;
    let camera = SyntheticCamera::new(scene.clone(), sigma, max_occluded);
    let mut history = ObservationHistory::new(depth);
    let mut world = stacking_state(&cfg);
    let mut truth = GroundTruth::default();
    let mut last_seen: BTreeMap<BlockId, usize> = BTreeMap::new();
    let mut frame_no = 0usize;
    let targets: BTreeMap<ParticipantId, usize> = cfg
        .participants
        .iter()
        .map(|p| (p.clone(), rng.gen_range(0..=7)))
        .collect();
    let mut ts = 0u64;
    loop {
        let open: Vec<&ParticipantId> = targets
            .iter()
            .filter(|(p, n)| truth.stack(p).len() < **n)
            .map(|(p, _)| p)
            .collect();
        let Some(owner) = open.choose(&mut rng).map(|p| (*p).clone()) else {
            break;
        };
        let inv = cfg.inventories.iter().find(|i| i.serves == owner).expect("pile");
        let block = topmost_unstacked(&world, &inv.id)
            .expect("inventory")
            .expect("block left");
        let agent = if rng.gen_bool(0.5) {
            AgentId::Robot
        } else {
            AgentId::Human(owner.clone())
        };
        let claim = SessionEvent::new(
            ts,
            agent.clone(),
            EventBody::Allocate {
                agent,
                block_id: block.clone(),
                receipt: 0,
            },
        );
        world = apply_transition(&world, &claim).map_err(|e| e.to_string())?;
        truth.place(&owner, block);
        for _ in 0..rng.gen_range(1..=4) {
            ts += 250;
            let (frame, hidden) = camera.render(&truth, ts, &mut rng);
            stats.frames += 1;
            stats.occluded_detections += hidden.len();
            for p in &cfg.participants {
                for b in truth.stack(p) {
                    if !hidden.contains(b) {
                        last_seen.insert(b.clone(), frame_no);
                    }
                }
            }
            let obs = infer_stacks(&frame, &scene).map_err(|e| e.to_string())?;
            let findings = reconcile(&world, &obs, &mut history).map_err(|e| e.to_string())?;
            for f in findings {
                match f {
                    Finding::Placed { block_id, owner, slot } => {
                        let ev =
                            SessionEvent::new(ts, Actor::Perception, EventBody::StackPlaced { block_id, owner, slot });
                        world = apply_transition(&world, &ev).map_err(|e| e.to_string())?;
                    }
                    Finding::Mismatch(m) => {
                        stats.errors += 1;
                        return Err(format!("scene {seed}: unexpected mismatch {}", m.detail));
                    }
                }
            }
            let eligible = cfg.participants.iter().all(|p| {
                truth
                    .stack(p)
                    .iter()
                    .all(|b| last_seen.get(b).is_some_and(|&f| frame_no - f < depth))
            });
            if eligible {
                stats.eligible += 1;
                let agrees = cfg
                    .participants
                    .iter()
                    .all(|p| world.stacks[p].placed.as_slice() == truth.stack(p));
                if agrees {
                    stats.correct_eligible += 1;
                }
            }
            frame_no += 1;
        }
    }
    Ok(())
}

pub fn ac6_perception(scenes: u64) -> Check {
    let mut stats = PerceptionStats::default();
    let mut failures = Vec::new();
    for seed in 0..scenes {
        if let Err(e) = perception_scene(seed, 0.002, 2, &mut stats) {
            failures.push(e);
        }
    }
    let pass = failures.is_empty() && stats.eligible > 0 && stats.correct_eligible == stats.eligible;
    Check::new(
        pass,
        format!(
            "{scenes} scenes, {} frames ({} hidden block views), {} frames with every block seen in the last 30: {} reconciled to ground truth{}",
            stats.frames,
            stats.occluded_detections,
            stats.eligible,
            stats.correct_eligible,
            failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- AC7

/// A generated log together with the activity spans it was built from.
pub struct GeneratedLog {
    pub events: Vec<SessionEvent>,
    pub start: u64,
    pub end: u64,
    /// Action spans per agent, open actions already closed at `end`.
    pub actions: Vec<(AgentId, u64, u64)>,
    pub moves: Vec<(AgentId, u64)>,
}

pub fn random_log<R: Rng>(rng: &mut R, max_duration_ms: u64) -> GeneratedLog {
    let cfg = reference_config(0);
    let start = rng.gen_range(0..5_000);
    let end = start + rng.gen_range(1_000..max_duration_ms.max(1_001));
    let agents: Vec<AgentId> = std::iter::once(AgentId::Robot)
        .chain(cfg.participants.iter().cloned().map(AgentId::Human))
        .collect();
    let mut body: Vec<(u64, u64, EventBody)> = Vec::new();
    let mut order = 0u64;
    let mut push = |body: &mut Vec<(u64, u64, EventBody)>, ts: u64, b: EventBody| {
        order += 1;
        body.push((ts, order, b));
    };
    let mut actions = Vec::new();
    let mut moves = Vec::new();
    for agent in &agents {
        let kind = if *agent == AgentId::Robot {
            ActionKind::PickPlace
        } else {
            ActionKind::FetchPlace
        };
        let mut t = start + rng.gen_range(0..3_000);
        while t < end {
            let len = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..8_000) };
            push(
                &mut body,
                t,
                EventBody::ActionStart {
                    agent: agent.clone(),
                    action: kind,
                    block_id: None,
                },
            );
            let stop = t + len;
            if stop >= end {
                if rng.gen_bool(0.5) {
                    actions.push((agent.clone(), t, end));
                    break;
                }
                push(
                    &mut body,
                    end,
                    EventBody::ActionEnd {
                        agent: agent.clone(),
                        action: kind,
                        block_id: None,
                        outcome: ActionOutcome::Completed,
                    },
                );
                actions.push((agent.clone(), t, end));
                break;
            }
            push(
                &mut body,
                stop,
                EventBody::ActionEnd {
                    agent: agent.clone(),
                    action: kind,
                    block_id: None,
                    outcome: ActionOutcome::Completed,
                },
            );
            actions.push((agent.clone(), t, stop));
            t = stop + rng.gen_range(0..4_000);
        }
        if let AgentId::Human(p) = agent {
            for _ in 0..rng.gen_range(0..15) {
                let ts = rng.gen_range(start..=end);
                push(
                    &mut body,
                    ts,
                    EventBody::PuzzleMove {
                        participant: p.clone(),
                        from: PieceSource::Slot { index: 0 },
                        to_slot: 0,
                    },
                );
                moves.push((agent.clone(), ts));
            }
        }
    }
    body.sort_by_key(|(ts, order, _)| (*ts, *order));
    let mut events = vec![SessionEvent::new(
        start,
        Actor::Server,
        EventBody::SessionStart { config: cfg },
    )];
    events.extend(
        body.into_iter()
            .map(|(ts, _, b)| SessionEvent::new(ts, Actor::Server, b)),
    );
    events.push(SessionEvent::new(
        end,
        Actor::Server,
        EventBody::SessionEnd {
            done: false,
            reason: "generated".into(),
            log_digest: String::new(),
            state_digest: String::new(),
        },
    ));
    GeneratedLog {
        events,
        start,
        end,
        actions,
        moves,
    }
}

/// Per-millisecond activity of each agent over `[start, end)`.
pub fn sweep_activity(log: &GeneratedLog, agents: &[AgentId], widen_ms: u64) -> Vec<Vec<bool>> {
    let n = (log.end - log.start) as usize;
    agents
        .iter()
        .map(|a| {
            let mut active = vec![false; n];
            let mut mark = |s: u64, e: u64| {
                for t in s.max(log.start)..e.min(log.end) {
                    active[(t - log.start) as usize] = true;
                }
            };
            for (who, s, e) in &log.actions {
                if who == a {
                    mark(*s, *e);
                }
            }
            for (who, t) in &log.moves {
                if who == a {
                    mark(*t, t + widen_ms);
                }
            }
            active
        })
        .collect()
}

/// Hand-off delays found by stepping forward one millisecond at a time.
pub fn sweep_delays(log: &GeneratedLog) -> Vec<u64> {
    let mut starts_at: BTreeMap<u64, Vec<&AgentId>> = BTreeMap::new();
    for (a, s, _) in &log.actions {
        starts_at.entry(*s).or_default().push(a);
    }
    let mut out = Vec::new();
    for (a, s, e) in &log.actions {
        let mut t = s + 1;
        while t <= log.end {
            if starts_at.get(&t).is_some_and(|v| v.iter().any(|b| *b != a)) {
                out.push(t.saturating_sub(*e));
                break;
            }
            t += 1;
        }
    }
    out.sort_unstable();
    out
}

/// Hand-off delays by comparing every pair of actions.
pub fn pairwise_delays(log: &GeneratedLog) -> Vec<u64> {
    let mut out: Vec<u64> = log
        .actions
        .iter()
        .filter_map(|(a, s, e)| {
            log.actions
                .iter()
                .filter(|(b, s2, _)| b != a && s2 > s)
                .map(|(_, s2, _)| *s2)
                .min()
                .map(|next| next.saturating_sub(*e))
        })
        .collect();
    out.sort_unstable();
    out
}

/// Checks one generated log against the sweep. Returns the first discrepancy.
pub fn check_metrics_log(log: &GeneratedLog) -> Result<(), String> {
    let opts = MetricsOptions::default();
    let agents: Vec<AgentId> = vec![AgentId::Robot, AgentId::human("P1"), AgentId::human("P2")];
    let activity = sweep_activity(log, &agents, opts.min_activity_ms);
    let duration = log.end - log.start;
    let report = fluency_report(&log.events, &opts).map_err(|e| e.to_string())?;
    if report.task_completion_ms != duration {
        return Err(format!("duration {} vs {duration}", report.task_completion_ms));
    }
    for (a, act) in agents.iter().zip(&activity) {
        let sweep_idle = act.iter().filter(|x| !**x).count() as u64;
        let idle = idle_time(&log.events, a, &opts).map_err(|e| e.to_string())?;
        if idle.abs_diff(sweep_idle) > 1 {
            return Err(format!("{a}: idle {idle} ms vs sweep {sweep_idle} ms"));
        }
        let r = &report.agents[a];
        if r.idle_ms + r.active_ms != duration {
            return Err(format!(
                "{a}: idle + active = {} != {duration}",
                r.idle_ms + r.active_ms
            ));
        }
    }
    let all = (0..duration as usize)
        .filter(|&t| activity.iter().all(|a| a[t]))
        .count() as f64;
    let sweep_ca = all / duration as f64;
    let ca = concurrent_activity(&log.events, &opts).map_err(|e| e.to_string())?;
    if (ca - sweep_ca).abs() > 1.0 / duration as f64 + 1e-12 {
        return Err(format!("concurrent activity {ca} vs sweep {sweep_ca}"));
    }
    let sweep = sweep_delays(log);
    let pairs = pairwise_delays(log);
    if sweep != pairs {
        return Err("sweep and pairwise delay oracles disagree".into());
    }
    match functional_delay(&log.events, &opts) {
        Ok(d) => {
            let mut got = d.delays_ms.clone();
            got.sort_unstable();
            if got.len() != sweep.len() || got.iter().zip(&sweep).any(|(a, b)| a.abs_diff(*b) > 1) {
                return Err(format!("functional delays {got:?} vs sweep {sweep:?}"));
            }
            let mean = sweep.iter().sum::<u64>() as f64 / sweep.len() as f64;
            if (d.mean_ms - mean).abs() > 1.0 {
                return Err(format!("mean delay {} vs sweep {mean}", d.mean_ms));
            }
        }
        Err(_) if sweep.is_empty() => {}
        Err(e) => {
            return Err(format!(
                "functional delay failed with {} sweep delays: {e}",
                sweep.len()
            ))
        }
    }
    Ok(())
}

fn ms(t: u64, agent: &AgentId, start: bool) -> SessionEvent {
    let body = if start {
        EventBody::ActionStart {
            agent: agent.clone(),
            action: ActionKind::PickPlace,
            block_id: None,
        }
    } else {
        EventBody::ActionEnd {
            agent: agent.clone(),
            action: ActionKind::PickPlace,
            block_id: None,
            outcome: ActionOutcome::Completed,
        }
    };
    SessionEvent::new(t, agent.clone(), body)
}

/// Robot [0, 10 s], P1 [5, 20 s], P2 [8, 12 s] over a 20 s session.
pub fn worked_example() -> Vec<SessionEvent> {
    let (r, h1, h2) = (AgentId::Robot, AgentId::human("P1"), AgentId::human("P2"));
    vec![
        SessionEvent::new(
            0,
            Actor::Server,
            EventBody::SessionStart {
                config: reference_config(0),
            },
        ),
        ms(0, &r, true),
        ms(5_000, &h1, true),
        ms(8_000, &h2, true),
        ms(10_000, &r, false),
        ms(12_000, &h2, false),
        ms(20_000, &h1, false),
        SessionEvent::new(
            20_000,
            Actor::Server,
            EventBody::SessionEnd {
                done: true,
                reason: "example".into(),
                log_digest: String::new(),
                state_digest: String::new(),
            },
        ),
    ]
}

pub fn ac7_metrics(logs: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut intervals = 0;
    for i in 0..logs {
        let log = random_log(&mut rng, 30_000);
        intervals += log.actions.len() + log.moves.len();
        if let Err(e) = check_metrics_log(&log) {
            failures.push(format!("log {i}: {e}"));
        }
    }
    let example = concurrent_activity(&worked_example(), &MetricsOptions::default()).unwrap_or(f64::NAN);
    let example_ok = (example - 0.10).abs() < 1e-12;
    Check::new(
        failures.is_empty() && example_ok,
        format!(
            "{logs} random logs ({intervals} intervals): {} match the 1 ms sweep and pairwise oracles with idle + active = duration; worked example concurrent activity {example:.4}{}",
            logs as usize - failures.len(),
            failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- AC8

const INTERESTING: &[u8] = b"{}[]\":,\n\\0-.e9 \x00\x7f\xc3\xff";

/// Applies one random byte- or token-level mutation.
pub fn mutate_frame<R: Rng>(rng: &mut R, corpus: &[Vec<u8>], frame: &[u8]) -> Vec<u8> {
    let mut b = frame.to_vec();
    let len = b.len().max(1);
    match rng.gen_range(0..10) {
        0 => {
            let i = rng.gen_range(0..len).min(b.len().saturating_sub(1));
            if let Some(x) = b.get_mut(i) {
                *x ^= 1 << rng.gen_range(0..8);
            }
        }
        1 => {
            let i = rng.gen_range(0..len).min(b.len().saturating_sub(1));
            if let Some(x) = b.get_mut(i) {
                *x = *INTERESTING.choose(rng).expect("nonempty");
            }
        }
        2 => {
            let i = rng.gen_range(0..=b.len());
            b.insert(
                i,
                if rng.gen_bool(0.5) {
                    rng.gen()
                } else {
                    *INTERESTING.choose(rng).expect("nonempty")
                },
            );
        }
        3 => {
            let i = rng.gen_range(0..len).min(b.len());
            let j = (i + rng.gen_range(1..16)).min(b.len());
            b.drain(i..j);
        }
        4 => {
            let i = rng.gen_range(0..=b.len());
            b.truncate(i);
        }
        5 => {
            let i = rng.gen_range(0..len).min(b.len());
            let j = (i + rng.gen_range(1..32)).min(b.len());
            let chunk = b[i..j].to_vec();
            b.splice(i..i, chunk);
        }
        6 => {
            let other = corpus.choose(rng).expect("corpus");
            let cut_a = rng.gen_range(0..=b.len());
            let cut_b = rng.gen_range(0..=other.len());
            b.truncate(cut_a);
            b.extend_from_slice(&other[cut_b..]);
        }
        7 => {
            let kinds = [
                "Hello",
                "ConfigPush",
                "StartTask",
                "AllocationRequest",
                "AllocationResponse",
                "ReleaseBlock",
                "PuzzleMove",
                "StateUpdate",
                "DetectionFrame",
                "ActionStart",
                "ActionEnd",
                "SessionEnd",
                "Error",
                "Heartbeat",
                "RobotStop",
                "Bogus",
            ];
            let text = String::from_utf8_lossy(&b).into_owned();
            let replaced = kinds
                .iter()
                .find(|k| text.contains(&format!("\"kind\":\"{k}\"")))
                .map(|k| {
                    text.replacen(
                        &format!("\"kind\":\"{k}\""),
                        &format!("\"kind\":\"{}\"", kinds.choose(rng).expect("kinds")),
                        1,
                    )
                })
                .unwrap_or(text);
            b = replaced.into_bytes();
        }
        8 => {
            let numbers = [
                "-1",
                "1e400",
                "18446744073709551616",
                "0.5",
                "null",
                "\"7\"",
                "[]",
                "{}",
                "true",
            ];
            let text = String::from_utf8_lossy(&b).into_owned();
            let digits: Vec<usize> = text
                .match_indices(|c: char| c.is_ascii_digit())
                .map(|(i, _)| i)
                .collect();
            if let Some(&i) = digits.choose(rng) {
                let j = text[i..]
                    .find(|c: char| !c.is_ascii_digit())
                    .map_or(text.len(), |k| i + k);
                let mut t = text.clone();
                t.replace_range(i..j, numbers.choose(rng).expect("numbers"));
                b = t.into_bytes();
            }
        }
        _ => {
            let text = String::from_utf8_lossy(&b).into_owned();
            let keys: Vec<usize> = text.match_indices("\":").map(|(i, _)| i).collect();
            if let Some(&i) = keys.choose(rng) {
                let mut t = text.clone();
                t.insert(i, 'z');
                b = t.into_bytes();
            }
        }
    }
    b
}

pub fn seed_corpus(seed: u64) -> Vec<Vec<u8>> {
    let mut corpus: Vec<Vec<u8>> = sample_messages(200, seed)
        .iter()
        .map(|m| encode_message(m).expect("generated messages encode"))
        .collect();
    corpus.push(b"{\"kind\":\"Heartbeat\",\"seq\":1,\"ts\":0,\"payload\":{}}\n".to_vec());
    corpus.push(b"{\"kind\":\"AllocationRequest\",\"seq\":2,\"ts\":5,\"payload\":{\"requester\":\"robot\",\"block_id\":\"P1-red\"}}\n".to_vec());
    corpus
}

#[derive(Debug, Default, Clone)]
pub struct FuzzStats {
    pub inputs: usize,
    pub valid: usize,
    pub errors: BTreeMap<String, usize>,
    pub crashes: usize,
    pub inconsistent: usize,
}

pub fn fuzz_decode(mutations: usize, seed: u64) -> FuzzStats {
    let corpus = seed_corpus(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FuzzStats::default();
    for _ in 0..mutations {
        let base = corpus.choose(&mut rng).expect("corpus");
        let mut input = mutate_frame(&mut rng, &corpus, base);
        if rng.gen_bool(0.3) {
            input = mutate_frame(&mut rng, &corpus, &input);
        }
        stats.inputs += 1;
        match catch_unwind(AssertUnwindSafe(|| decode_message(&input))) {
            Err(_) => stats.crashes += 1,
            Ok(Ok(m)) => {
                stats.valid += 1;
                let again = encode_message(&m).ok().and_then(|b| decode_message(&b).ok());
                if again.as_ref() != Some(&m) {
                    stats.inconsistent += 1;
                }
            }
            Ok(Err(e)) => {
                let name = format!("{e:?}");
                let variant = name.split(['(', ' ', '{']).next().unwrap_or("?").to_owned();
                *stats.errors.entry(variant).or_default() += 1;
            }
        }
    }
    stats
}

/// Messages that fail to come back identical after encode and decode.
pub fn round_trip_failures(messages: &[Message]) -> Vec<String> {
    messages
        .iter()
        .filter_map(|m| {
            let bytes = match encode_message(m) {
                Ok(b) => b,
                Err(e) => return Some(format!("{:?} does not encode: {e}", m.kind())),
            };
            match decode_message(&bytes) {
                Ok(back) if back == *m => {
                    let again = encode_message(&back).expect("decoded messages encode");
                    (again != bytes).then(|| format!("{:?} re-encodes differently", m.kind()))
                }
                Ok(_) => Some(format!("{:?} decodes to a different message", m.kind())),
                Err(e) => Some(format!("{:?} does not decode: {e}", m.kind())),
            }
        })
        .collect()
}

pub fn ac8_protocol(mutations: usize, round_trips: usize) -> Check {
    let stats = fuzz_decode(mutations, 8);
    let messages = sample_messages(round_trips, 88);
    let kinds: BTreeSet<_> = messages.iter().map(|m| m.kind().as_str()).collect();
    let failures = round_trip_failures(&messages);
    let classified = stats.valid + stats.errors.values().sum::<usize>();
    let pass = stats.crashes == 0 && stats.inconsistent == 0 && classified == stats.inputs && failures.is_empty();
    Check::new(
        pass,
        format!(
            "{} mutated frames: {} crashes, {} valid, {} structured errors {:?}; {} generated messages over {} kinds: {} round-trip failures{}",
            stats.inputs,
            stats.crashes,
            stats.valid,
            classified - stats.valid,
            stats.errors,
            messages.len(),
            kinds.len(),
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}
