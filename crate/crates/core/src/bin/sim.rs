use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use cohrt_core::coordination_server::net::{DEFAULT_TCP_PORT, DEFAULT_WS_PORT};
use cohrt_core::fluency_metrics::{render, ReportFormat};
use cohrt_core::ids::ParticipantId;
use cohrt_core::sim_harness::{
    replay_path, run_real_time, run_scenario, FaultSpec, RealTimeOptions, ScenarioStatus, SimOptions,
};
use cohrt_core::world_model::{is_session_done, TaskConfig};
use tracing_subscriber::EnvFilter;

/// Scenario runner and log replayer.
#[derive(Parser, Debug)]
#[command(name = "cohrt-sim", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario with scripted participants and the robot.
    Run {
        /// Scenario config; the `.toml` suffix may be omitted.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Run in wall-clock time over real sockets instead of the virtual clock.
        #[arg(long)]
        real_time: bool,
        /// Fault to inject, e.g. `disconnect:P2@30000+reconnect@45000`. Repeatable.
        #[arg(long)]
        fault: Vec<FaultSpec>,
        /// Directory for session.log and report.txt.
        #[arg(long, default_value = "sim-out")]
        out_dir: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
        /// In real-time mode, participants left to live clients.
        #[arg(long, value_delimiter = ',')]
        live: Vec<ParticipantId>,
        #[arg(long, default_value_t = DEFAULT_TCP_PORT)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_WS_PORT)]
        ws_port: u16,
    },
    /// Rebuild the final state from a session log and check its integrity.
    Replay { log: PathBuf },
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .init();
    match Args::parse().command {
        Command::Run {
            config,
            seed,
            real_time,
            fault,
            out_dir,
            format,
            live,
            port,
            ws_port,
        } => {
            let config = TaskConfig::load(&config)?;
            if real_time {
                std::fs::create_dir_all(&out_dir)?;
                let summary = run_real_time(
                    config,
                    seed,
                    RealTimeOptions {
                        tcp_addr: SocketAddr::from(([0, 0, 0, 0], port)),
                        ws_addr: SocketAddr::from(([0, 0, 0, 0], ws_port)),
                        live_participants: live,
                        synthetic_perception_ms: 250,
                        log_out: Some(out_dir.join("session.log")),
                    },
                )
                .await?;
                println!("status: {:?}", summary.outcome);
                return Ok(());
            }
            let result = run_scenario(
                &config,
                seed,
                &fault,
                &SimOptions {
                    out_dir: Some(out_dir),
                    ..SimOptions::default()
                },
            )?;
            println!("status: {:?}", result.status);
            println!("virtual time: {} ms", result.virtual_ms);
            for (p, n) in &result.robot_contributions {
                println!("robot contributed to {p}: {n}");
            }
            if let Some(reason) = &result.robot_stop_reason {
                println!("robot stop: {reason}");
            }
            if let Some(path) = &result.log_path {
                println!("log: {}", path.display());
            }
            if let Some(report) = &result.report {
                print!("{}", render(report, format));
            }
            if result.status != ScenarioStatus::Success {
                std::process::exit(2);
            }
        }
        Command::Replay { log } => {
            let state = replay_path(&log)?;
            println!("replay ok; final clock {} ms", state.session_clock_ms);
            println!("session done: {}", is_session_done(&state));
            for (p, s) in &state.stacks {
                println!("stack {p}: {}/{} placed", s.placed.len(), s.pattern.len());
            }
        }
    }
    Ok(())
}
