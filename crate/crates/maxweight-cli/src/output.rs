//! CSV and summary emission.
//!
//! Every float is printed with nine significant digits in scientific form,
//! so two runs of the same configuration produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use maxweight::sim::{measure_direction, mode_window_stats, ArrivalKind, SimTrace, WindowStat};

pub fn sig9(value: f64) -> String {
    format!("{value:.8e}")
}

fn join_sig9(values: &[f64]) -> String {
    values.iter().map(|&v| sig9(v)).collect::<Vec<_>>().join(",")
}

/// Render a trace as CSV: `t,x_*,scaled_*,ratio_*,chosen`, one row per
/// `stride` slots plus the final state. `chosen` is 1-based; 0 marks an idle
/// slot or the final row.
pub fn trace_csv(trace: &SimTrace, stride: u64) -> String {
    let q = trace.q();
    let stride = stride.max(1);
    let mut out = String::new();
    out.push('t');
    for group in ["x", "scaled", "ratio"] {
        for queue in 1..=q {
            let _ = write!(out, ",{group}_{queue}");
        }
    }
    out.push_str(",chosen\n");

    let horizon = trace.horizon();
    let mut emit = |t: u64| {
        let x = trace.workload_at(t);
        let scaled = if t == 0 {
            vec![0.0; q]
        } else {
            trace.scaled_at(t)
        };
        let ratios = trace.ratios_at(t).unwrap_or_else(|| vec![0.0; q]);
        let chosen = if t < horizon {
            trace.records[t as usize].chosen.map_or(0, |m| m + 1)
        } else {
            0
        };
        let _ = writeln!(
            out,
            "{t},{},{},{},{chosen}",
            join_sig9(x),
            join_sig9(&scaled),
            join_sig9(&ratios)
        );
    };
    let mut t = 0;
    while t < horizon {
        emit(t);
        t += stride;
    }
    emit(horizon);
    out
}

/// Per-run summary entry, embedding the resolved run configuration.
#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub csv: String,
    pub config: maxweight::sim::RunConfig,
    pub eta_hat: Vec<f64>,
    pub theta_hat: Option<Vec<f64>>,
    pub target_theta: Option<Vec<f64>>,
    /// Largest componentwise gap between measured shares and the target.
    pub max_ratio_deviation: Option<f64>,
    /// Present for mode-switching runs: one entry per window.
    pub windows: Option<Vec<WindowStat>>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub tail_fraction: f64,
    pub runs: Vec<RunSummary>,
}

pub fn summarize_run(
    name: &str,
    csv: &str,
    trace: &SimTrace,
    target: Option<&[f64]>,
    tail_fraction: f64,
) -> RunSummary {
    let estimate = measure_direction(trace, tail_fraction);
    let max_ratio_deviation = match (&estimate.theta_hat, target) {
        (Some(hat), Some(want)) => Some(
            hat.iter()
                .zip(want)
                .map(|(h, w)| (h - w).abs())
                .fold(0.0f64, f64::max),
        ),
        _ => None,
    };
    let windows = match &trace.config.arrivals.kind {
        ArrivalKind::ModeSwitch { period, .. } => Some(mode_window_stats(trace, *period)),
        _ => None,
    };
    RunSummary {
        name: name.to_string(),
        csv: csv.to_string(),
        config: trace.config.clone(),
        eta_hat: estimate.eta_hat,
        theta_hat: estimate.theta_hat,
        target_theta: target.map(|t| t.to_vec()),
        max_ratio_deviation,
        windows,
    }
}

pub fn write_outputs(out_dir: &Path, summary: &Summary, csvs: &[(String, String)]) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    for (name, content) in csvs {
        fs::write(out_dir.join(name), content)?;
    }
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(out_dir.join("summary.json"), text + "\n")
}

/// Format a vector for console output, nine significant digits.
pub fn vec_text(values: &[f64]) -> String {
    format!("({})", values.iter().map(|&v| sig9(v)).collect::<Vec<_>>().join(", "))
}

/// Format an index set 1-based for console output.
pub fn subset_text(subset: &[usize]) -> String {
    format!(
        "{{{}}}",
        subset
            .iter()
            .map(|m| (m + 1).to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )
}
