use std::fmt::Write as _;
use std::str::FromStr;

use super::metrics::FluencyReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
    Lines,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "lines" => Ok(ReportFormat::Lines),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?}; expected table, csv, lines or json")),
        }
    }
}

/// (metric, subject, value) rows shared by every text format.
fn rows(r: &FluencyReport) -> Vec<(String, String, String)> {
    let mut out = vec![
        (
            "task_completion_ms".into(),
            "team".into(),
            r.task_completion_ms.to_string(),
        ),
        (
            "concurrent_activity_fraction".into(),
            "team".into(),
            format!("{:.4}", r.concurrent_activity_fraction),
        ),
    ];
    for (agent, a) in &r.agents {
        out.push(("active_ms".into(), agent.to_string(), a.active_ms.to_string()));
        out.push(("idle_ms".into(), agent.to_string(), a.idle_ms.to_string()));
        out.push((
            "idle_fraction".into(),
            agent.to_string(),
            format!("{:.4}", a.idle_fraction),
        ));
    }
    for (pair, f) in &r.pairwise_overlap {
        out.push(("pairwise_overlap_fraction".into(), pair.clone(), format!("{f:.4}")));
    }
    match &r.functional_delay {
        Some(d) => {
            out.push((
                "functional_delay_count".into(),
                "team".into(),
                d.delays_ms.len().to_string(),
            ));
            out.push((
                "functional_delay_mean_ms".into(),
                "team".into(),
                format!("{:.1}", d.mean_ms),
            ));
            out.push((
                "functional_delay_median_ms".into(),
                "team".into(),
                format!("{:.1}", d.median_ms),
            ));
        }
        None => out.push(("functional_delay_mean_ms".into(), "team".into(), "n/a".into())),
    }
    match &r.rhythm {
        Some(rh) => {
            out.push(("rhythm_cv".into(), "team".into(), format!("{:.4}", rh.cv)));
            out.push((
                "rhythm_intervals".into(),
                "team".into(),
                rh.intervals_ms.len().to_string(),
            ));
        }
        None => out.push(("rhythm_cv".into(), "team".into(), "n/a".into())),
    }
    for (agent, phases) in &r.phase_idle_ms {
        for (phase, ms) in phases {
            let name = serde_json::to_value(phase)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            out.push((format!("idle_ms_{name}"), agent.to_string(), ms.to_string()));
        }
    }
    out
}

pub fn render(report: &FluencyReport, format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Json => {
            s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
        }
        ReportFormat::Csv => {
            s.push_str("metric,subject,value\n");
            for (m, sub, v) in rows(report) {
                let _ = writeln!(s, "{m},{sub},{v}");
            }
        }
        ReportFormat::Lines => {
            for (m, sub, v) in rows(report) {
                if sub == "team" {
                    let _ = writeln!(s, "{m}={v}");
                } else {
                    let _ = writeln!(s, "{m}[{sub}]={v}");
                }
            }
        }
        ReportFormat::Table => {
            let rows = rows(report);
            let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(6).max(6);
            let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(7).max(7);
            let _ = writeln!(s, "{:<w0$}  {:<w1$}  value", "metric", "subject");
            let _ = writeln!(s, "{}  {}  {}", "-".repeat(w0), "-".repeat(w1), "-".repeat(10));
            for (m, sub, v) in rows {
                let _ = writeln!(s, "{m:<w0$}  {sub:<w1$}  {v}");
            }
        }
    }
    for w in &report.warnings {
        if format != ReportFormat::Json && format != ReportFormat::Csv {
            let _ = writeln!(s, "# warning: {w}");
        }
    }
    s
}
