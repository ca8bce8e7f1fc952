use clap::Parser;
use cohrt_core::agent::live::{run_live, LiveOutcome};
use cohrt_core::robot_agent::RobotAgent;
use cohrt_core::world_model::Timing;
use tracing_subscriber::EnvFilter;

/// Simulated robot teammate that joins a coordination server.
#[derive(Parser, Debug)]
#[command(name = "cohrt-robot", version)]
struct Args {
    /// Server TCP address.
    #[arg(long, default_value = "127.0.0.1:7450")]
    server: String,
    #[arg(long, default_value = "alternating_equal")]
    policy: String,
    /// Pick and place durations, e.g. `pick=2000,place=3000`. Defaults to the
    /// values in the server's config.
    #[arg(long, value_parser = parse_timing)]
    timing: Option<Timing>,
    /// Make the n-th granted action (0-based) fail after the pick.
    #[arg(long)]
    fault_after_pick: Vec<u32>,
}

fn parse_timing(s: &str) -> Result<Timing, String> {
    let mut t = Timing::default();
    for part in s.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=ms, got {part:?}"))?;
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| format!("{v:?} is not a number of milliseconds"))?;
        match k.trim() {
            "pick" => t.robot_pick_ms = v,
            "place" => t.robot_place_ms = v,
            other => return Err(format!("unknown timing key {other:?}")),
        }
    }
    Ok(t)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let mut robot = RobotAgent::new(&args.policy)?;
    if let Some(t) = args.timing {
        robot = robot.with_timing(t);
    }
    for n in args.fault_after_pick {
        robot = robot.with_fault_after_pick(n);
    }
    let outcome = run_live(&mut robot, &args.server).await?;
    match (outcome, robot.stop_reason()) {
        (LiveOutcome::SessionEnded, Some(reason)) => println!("session ended; robot stopped: {reason}"),
        (LiveOutcome::SessionEnded, None) => println!("session ended"),
        (LiveOutcome::ServerClosed, _) => println!("server closed the connection"),
    }
    if let Some(state) = robot.policy_state() {
        for (p, n) in &state.contributed {
            println!("contributed {p} {n}");
        }
    }
    Ok(())
}
