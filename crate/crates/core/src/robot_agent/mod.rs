//! Simulated robot teammate: picks whom to help under the equal-effort
//! alternating policy, plans abstract waypoints and runs timed pick-and-place
//! actions through the protocol.

mod planner;
mod policy;
mod robot;

pub use planner::{plan_waypoints, PlanError, WaypointPlan};
pub use policy::{
    available_block, open_slots, policy_for, select_action, Action, ActionPhase, ActiveAction, AlternatingEqual,
    RobotPolicy, RobotPolicyState, UnknownPolicy, TIE_MARGIN,
};
pub use robot::RobotAgent;
