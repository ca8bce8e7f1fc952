//! Deterministic end-to-end scenario runner: scripted participants, the robot
//! agent, a ground-truth scene observed by a synthetic camera, fault injection
//! and log replay. Everything runs on a virtual clock driven by a seeded event
//! scheduler, so a (config, seed, faults) triple fixes the session log.

mod fault;
mod human;
mod live;
mod replay;
mod scenario;

pub use fault::{FaultParseError, FaultSpec};
pub use human::{ScriptedAgentProfile, ScriptedHuman};
pub use live::{run_real_time, RealTimeOptions};
pub use replay::{replay, replay_path, ReplayError};
pub use scenario::{run_scenario, run_scenario_path, ScenarioError, ScenarioResult, ScenarioStatus, SimOptions};
