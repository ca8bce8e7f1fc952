use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use cohrt_core::coordination_server::net::{start_server, ServerOptions, DEFAULT_TCP_PORT, DEFAULT_WS_PORT};
use cohrt_core::world_model::TaskConfig;
use tracing_subscriber::EnvFilter;

/// Coordination server for a human-robot block-stacking session.
#[derive(Parser, Debug)]
#[command(name = "cohrt-server", version)]
struct Args {
    /// Task config (TOML); the `.toml` suffix may be omitted.
    #[arg(long)]
    config: PathBuf,
    /// Raw TCP port for agent clients.
    #[arg(long, default_value_t = DEFAULT_TCP_PORT)]
    port: u16,
    /// WebSocket port for browser clients, served at /ws.
    #[arg(long, default_value_t = DEFAULT_WS_PORT)]
    ws_port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    bind: std::net::IpAddr,
    /// Where to write the session log when the session ends.
    #[arg(long)]
    log_out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// End the session when an agent client disconnects.
    #[arg(long)]
    abort_on_client_loss: bool,
    /// Render detection frames from reported placements every N ms, for
    /// sessions without a perception client.
    #[arg(long)]
    synthetic_perception_ms: Option<u64>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let mut config = TaskConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.abort_on_client_loss {
        config.session.abort_on_client_loss = true;
    }
    let server = start_server(
        config,
        ServerOptions {
            tcp_addr: SocketAddr::new(args.bind, args.port),
            ws_addr: SocketAddr::new(args.bind, args.ws_port),
            synthetic_perception_ms: args.synthetic_perception_ms,
            log_out: args.log_out,
            ..ServerOptions::default()
        },
    )
    .await?;
    server.shutdown_on_ctrl_c();
    let summary = server.wait().await?;
    println!(
        "session ended: {:?} ({} log events)",
        summary.outcome,
        summary.log.events().len()
    );
    if !summary.outcome.is_success() {
        std::process::exit(2);
    }
    Ok(())
}
