//! Coordination runtime for a two-participant human-robot block-stacking
//! study: wire protocol, world model, coordination server, perception, the
//! robot teammate, fluency metrics and a deterministic simulation harness.

pub mod agent;
pub mod coordination_server;
pub mod fluency_metrics;
pub mod ids;
pub mod perception;
pub mod protocol;
pub mod robot_agent;
pub mod sim_harness;
pub mod world_model;
