use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::intervals::{
    all_overlap, coefficient_of_variation, cross_agent_starts, handoff_delays, intersect, mean, measure, median, merge,
    ActivityInterval, IntervalKind,
};
use crate::ids::AgentId;
use crate::world_model::{EventBody, Phase, SessionEvent, TaskConfig};

pub const DEFAULT_MIN_ACTIVITY_MS: u64 = 500;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error("agent {0} is not part of this session")]
    UnknownAgent(AgentId),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsOptions {
    /// Width given to each instantaneous puzzle move.
    pub min_activity_ms: u64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            min_activity_ms: DEFAULT_MIN_ACTIVITY_MS,
        }
    }
}

/// A checked view of a session log.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    pub events: &'a [SessionEvent],
    pub config: &'a TaskConfig,
    pub start_ms: u64,
    pub end_ms: u64,
}

impl<'a> Session<'a> {
    pub fn new(events: &'a [SessionEvent]) -> Result<Session<'a>, MetricsError> {
        let config = match events.first().map(|e| &e.body) {
            Some(EventBody::SessionStart { config }) => config,
            _ => return Err(MetricsError::MalformedLog("log does not open with SessionStart".into())),
        };
        if !matches!(events.last().map(|e| &e.body), Some(EventBody::SessionEnd { .. })) || events.len() < 2 {
            return Err(MetricsError::MalformedLog("log does not close with SessionEnd".into()));
        }
        if events.windows(2).any(|w| w[1].ts_ms < w[0].ts_ms) {
            return Err(MetricsError::MalformedLog("timestamps decrease".into()));
        }
        Ok(Session {
            events,
            config,
            start_ms: events[0].ts_ms,
            end_ms: events[events.len() - 1].ts_ms,
        })
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }

    /// The robot followed by every participant.
    pub fn agents(&self) -> Vec<AgentId> {
        std::iter::once(AgentId::Robot)
            .chain(self.config.participants.iter().cloned().map(AgentId::Human))
            .collect()
    }
}

/// Outcome of interval extraction, including actions closed at session end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub intervals: Vec<ActivityInterval>,
    pub warnings: Vec<String>,
}

/// Pairs `ActionStart`/`ActionEnd` first-in first-out per agent and widens
/// puzzle moves to `min_activity_ms`. Intervals are clipped to the session.
pub fn extract_intervals(events: &[SessionEvent], opts: &MetricsOptions) -> Result<Extraction, MetricsError> {
    let s = Session::new(events)?;
    let mut open: BTreeMap<AgentId, VecDeque<u64>> = BTreeMap::new();
    let mut intervals = Vec::new();
    let mut warnings = Vec::new();
    for (i, e) in events.iter().enumerate() {
        match &e.body {
            EventBody::ActionStart { agent, .. } => open.entry(agent.clone()).or_default().push_back(e.ts_ms),
            EventBody::ActionEnd { agent, .. } => {
                let start = open.get_mut(agent).and_then(VecDeque::pop_front).ok_or_else(|| {
                    MetricsError::MalformedLog(format!(
                        "ActionEnd for {agent} with no open ActionStart (event {})",
                        i + 1
                    ))
                })?;
                intervals.push(ActivityInterval {
                    agent: agent.clone(),
                    start_ms: start,
                    end_ms: e.ts_ms,
                    kind: IntervalKind::Action,
                });
            }
            EventBody::PuzzleMove { participant, .. } => intervals.push(ActivityInterval {
                agent: AgentId::Human(participant.clone()),
                start_ms: e.ts_ms,
                end_ms: e.ts_ms.saturating_add(opts.min_activity_ms).min(s.end_ms),
                kind: IntervalKind::PuzzleMove,
            }),
            _ => {}
        }
    }
    for (agent, starts) in open {
        for start in starts {
            let w = format!("action by {agent} started at {start} ms never ended; closed at session end");
            tracing::warn!("{w}");
            warnings.push(w);
            intervals.push(ActivityInterval {
                agent: agent.clone(),
                start_ms: start,
                end_ms: s.end_ms,
                kind: IntervalKind::Action,
            });
        }
    }
    intervals.sort_by(|a, b| (a.start_ms, a.end_ms, &a.agent).cmp(&(b.start_ms, b.end_ms, &b.agent)));
    Ok(Extraction { intervals, warnings })
}

pub fn task_completion_time(events: &[SessionEvent]) -> Result<u64, MetricsError> {
    Ok(Session::new(events)?.duration_ms())
}

fn merged_for(intervals: &[ActivityInterval], agent: &AgentId, lo: u64, hi: u64) -> Vec<(u64, u64)> {
    merge(
        intervals
            .iter()
            .filter(|i| i.agent == *agent)
            .map(ActivityInterval::span),
        lo,
        hi,
    )
}

pub fn idle_time(events: &[SessionEvent], agent: &AgentId, opts: &MetricsOptions) -> Result<u64, MetricsError> {
    let s = Session::new(events)?;
    if !s.agents().contains(agent) {
        return Err(MetricsError::UnknownAgent(agent.clone()));
    }
    let ex = extract_intervals(events, opts)?;
    Ok(s.duration_ms() - measure(&merged_for(&ex.intervals, agent, s.start_ms, s.end_ms)))
}

/// Fraction of the session during which the robot and every participant are
/// all active at once.
pub fn concurrent_activity(events: &[SessionEvent], opts: &MetricsOptions) -> Result<f64, MetricsError> {
    let s = Session::new(events)?;
    let ex = extract_intervals(events, opts)?;
    let lists: Vec<_> = s
        .agents()
        .iter()
        .map(|a| merged_for(&ex.intervals, a, s.start_ms, s.end_ms))
        .collect();
    Ok(fraction(measure(&all_overlap(&lists)), s.duration_ms()))
}

fn fraction(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySummary {
    pub delays_ms: Vec<u64>,
    pub mean_ms: f64,
    pub median_ms: f64,
}

/// Lag from the end of each action to the next action start by someone else.
pub fn functional_delay(events: &[SessionEvent], opts: &MetricsOptions) -> Result<DelaySummary, MetricsError> {
    let ex = extract_intervals(events, opts)?;
    let actions: Vec<ActivityInterval> = ex
        .intervals
        .into_iter()
        .filter(|i| i.kind == IntervalKind::Action)
        .collect();
    let delays = handoff_delays(&actions);
    match (mean(&delays), median(&delays)) {
        (Some(mean_ms), Some(median_ms)) => Ok(DelaySummary {
            delays_ms: delays,
            mean_ms,
            median_ms,
        }),
        _ => Err(MetricsError::InsufficientData(
            "no hand-off between different agents".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rhythm {
    pub intervals_ms: Vec<u64>,
    pub cv: f64,
}

/// Coefficient of variation of the gaps between consecutive action starts at
/// which the acting agent changes. Needs at least three such starts.
pub fn rhythm(events: &[SessionEvent]) -> Result<Rhythm, MetricsError> {
    Session::new(events)?;
    let starts: Vec<(u64, AgentId)> = events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::ActionStart { agent, .. } => Some((e.ts_ms, agent.clone())),
            _ => None,
        })
        .collect();
    rhythm_from_starts(&starts)
}

pub fn rhythm_from_starts(starts: &[(u64, AgentId)]) -> Result<Rhythm, MetricsError> {
    let cross = cross_agent_starts(starts);
    if cross.len() < 3 {
        return Err(MetricsError::InsufficientData(format!(
            "{} cross-agent action starts, need at least 3",
            cross.len()
        )));
    }
    let intervals_ms: Vec<u64> = cross.windows(2).map(|w| w[1] - w[0]).collect();
    let cv = coefficient_of_variation(&intervals_ms)
        .ok_or_else(|| MetricsError::InsufficientData("all cross-agent starts coincide".into()))?;
    Ok(Rhythm { intervals_ms, cv })
}

/// Idle time of each participant within each phase they went through.
pub fn phase_idle(
    events: &[SessionEvent],
    intervals: &[ActivityInterval],
) -> Result<BTreeMap<AgentId, BTreeMap<Phase, u64>>, MetricsError> {
    let s = Session::new(events)?;
    let mut out = BTreeMap::new();
    for p in &s.config.participants {
        let mut segments = vec![(s.start_ms, Phase::AwaitingStart)];
        for e in events {
            if let EventBody::PhaseChange { participant, phase } = &e.body {
                if participant == p {
                    segments.push((e.ts_ms, *phase));
                }
            }
        }
        let agent = AgentId::Human(p.clone());
        let active = merged_for(intervals, &agent, s.start_ms, s.end_ms);
        let mut per_phase: BTreeMap<Phase, u64> = BTreeMap::new();
        for (k, &(from, phase)) in segments.iter().enumerate() {
            let to = segments.get(k + 1).map_or(s.end_ms, |n| n.0);
            if to <= from {
                per_phase.entry(phase).or_insert(0);
                continue;
            }
            let busy = measure(&intersect(&active, &[(from, to)]));
            *per_phase.entry(phase).or_insert(0) += (to - from) - busy;
        }
        out.insert(agent, per_phase);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentActivity {
    pub active_ms: u64,
    pub idle_ms: u64,
    pub idle_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluencyReport {
    pub task_completion_ms: u64,
    pub min_activity_ms: u64,
    pub agents: BTreeMap<AgentId, AgentActivity>,
    pub concurrent_activity_fraction: f64,
    /// Overlap fraction for every pair of agents.
    pub pairwise_overlap: BTreeMap<String, f64>,
    pub functional_delay: Option<DelaySummary>,
    pub rhythm: Option<Rhythm>,
    pub phase_idle_ms: BTreeMap<AgentId, BTreeMap<Phase, u64>>,
    pub warnings: Vec<String>,
}

pub fn fluency_report(events: &[SessionEvent], opts: &MetricsOptions) -> Result<FluencyReport, MetricsError> {
    let s = Session::new(events)?;
    let ex = extract_intervals(events, opts)?;
    let duration = s.duration_ms();
    let agents = s.agents();
    let merged: Vec<Vec<(u64, u64)>> = agents
        .iter()
        .map(|a| merged_for(&ex.intervals, a, s.start_ms, s.end_ms))
        .collect();
    let activity = agents
        .iter()
        .zip(&merged)
        .map(|(a, m)| {
            let active_ms = measure(m);
            let idle_ms = duration - active_ms;
            (
                a.clone(),
                AgentActivity {
                    active_ms,
                    idle_ms,
                    idle_fraction: fraction(idle_ms, duration),
                },
            )
        })
        .collect();
    let mut pairwise_overlap = BTreeMap::new();
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            let both = measure(&intersect(&merged[i], &merged[j]));
            pairwise_overlap.insert(format!("{}+{}", agents[i], agents[j]), fraction(both, duration));
        }
    }
    let mut warnings = ex.warnings.clone();
    let functional_delay = match functional_delay(events, opts) {
        Ok(d) => Some(d),
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    let rhythm = match rhythm(events) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(e.to_string());
            None
        }
    };
    Ok(FluencyReport {
        task_completion_ms: duration,
        min_activity_ms: opts.min_activity_ms,
        agents: activity,
        concurrent_activity_fraction: fraction(measure(&all_overlap(&merged)), duration),
        pairwise_overlap,
        functional_delay,
        rhythm,
        phase_idle_ms: phase_idle(events, &ex.intervals)?,
        warnings,
    })
}
