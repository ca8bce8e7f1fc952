//! Team fluency metrics computed from a session log: task completion time,
//! per-agent idle time, concurrent activity, functional delay and rhythm.
//!
//! Activity comes from `ActionStart`/`ActionEnd` pairs, matched first-in
//! first-out per agent, plus puzzle moves widened to a minimum width. Rhythm
//! is the coefficient of variation of the gaps between consecutive action
//! starts at which the acting agent changes; the raw gaps are reported too.

mod format;
pub mod intervals;
mod metrics;

pub use format::{render, ReportFormat};
pub use intervals::{ActivityInterval, IntervalKind};
pub use metrics::{
    concurrent_activity, extract_intervals, fluency_report, functional_delay, idle_time, phase_idle, rhythm,
    rhythm_from_starts, task_completion_time, AgentActivity, DelaySummary, Extraction, FluencyReport, MetricsError,
    MetricsOptions, Rhythm, Session, DEFAULT_MIN_ACTIVITY_MS,
};
