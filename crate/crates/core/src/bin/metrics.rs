use std::path::PathBuf;

use clap::Parser;
use cohrt_core::coordination_server::LoadedLog;
use cohrt_core::fluency_metrics::{fluency_report, render, MetricsOptions, ReportFormat, DEFAULT_MIN_ACTIVITY_MS};
use tracing_subscriber::EnvFilter;

/// Team fluency metrics from a session log.
#[derive(Parser, Debug)]
#[command(name = "cohrt-metrics", version)]
struct Args {
    log_file: PathBuf,
    /// table, csv, lines or json
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Activity width given to each puzzle move.
    #[arg(long, default_value_t = DEFAULT_MIN_ACTIVITY_MS)]
    min_activity_ms: u64,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .init();
    let args = Args::parse();
    let log = LoadedLog::read(&args.log_file)?;
    let report = fluency_report(
        &log.events,
        &MetricsOptions {
            min_activity_ms: args.min_activity_ms,
        },
    )?;
    print!("{}", render(&report, args.format));
    Ok(())
}
