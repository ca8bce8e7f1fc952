use std::net::SocketAddr;

use super::human::{ScriptedAgentProfile, ScriptedHuman};
use crate::agent::live::run_live;
use crate::coordination_server::net::{start_server, ServerError, ServerOptions, ServerSummary};
use crate::ids::ParticipantId;
use crate::robot_agent::RobotAgent;
use crate::world_model::TaskConfig;

#[derive(Debug, Clone)]
pub struct RealTimeOptions {
    pub tcp_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    /// Participants left to live clients instead of scripted agents.
    pub live_participants: Vec<ParticipantId>,
    pub synthetic_perception_ms: u64,
    pub log_out: Option<std::path::PathBuf>,
}

/// Runs a session in wall-clock time over real sockets: the server, the robot
/// and scripted participants each talk TCP, and live clients may join the
/// remaining participant roles over the WebSocket endpoint.
pub async fn run_real_time(
    mut config: TaskConfig,
    seed: u64,
    opts: RealTimeOptions,
) -> Result<ServerSummary, ServerError> {
    config.seed = seed;
    let server = start_server(
        config.clone(),
        ServerOptions {
            tcp_addr: opts.tcp_addr,
            ws_addr: opts.ws_addr,
            synthetic_perception_ms: Some(opts.synthetic_perception_ms),
            log_out: opts.log_out.clone(),
            ..ServerOptions::default()
        },
    )
    .await?;
    let addr = server.tcp_addr.to_string();
    tracing::info!(tcp = %server.tcp_addr, ws = %server.ws_addr, "real-time session running");

    let mut robot = RobotAgent::new(&config.robot_policy).map_err(|e| ServerError::Join(e.to_string()))?;
    let robot_addr = addr.clone();
    tokio::spawn(async move {
        if let Err(e) = run_live(&mut robot, &robot_addr).await {
            tracing::error!("robot client failed: {e}");
        }
    });
    for (i, p) in config.participants.iter().enumerate() {
        if opts.live_participants.contains(p) {
            continue;
        }
        let mut human = ScriptedHuman::new(ScriptedAgentProfile::new(p.clone(), seed.wrapping_add(i as u64 + 1)));
        let a = addr.clone();
        tokio::spawn(async move {
            if let Err(e) = run_live(&mut human, &a).await {
                tracing::error!("scripted participant failed: {e}");
            }
        });
    }
    server.wait().await
}
