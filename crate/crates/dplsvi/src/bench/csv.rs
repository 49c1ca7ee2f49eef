//! CSV emission and parsing for run traces and aggregates.
//!
//! Floats are written in shortest round-trip form, so parsing an emitted
//! file reproduces every value bit-exactly.

use super::AggregateCurve;
use crate::agents::RunResult;
use std::fmt::Write as _;

pub const RUNS_HEADER: &str =
    "run_id,algorithm,epsilon,delta_prime,seed,episode,instant_regret,cumulative_regret,switch_count_so_far";
pub const AGGREGATES_HEADER: &str = "algorithm,epsilon,episode,mean_cum_regret,std,n";

fn fmt_f64(v: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Renders the per-episode rows of every run, one file for the whole suite.
pub fn render_runs_csv(runs: &[RunResult]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for run in runs {
        for rec in &run.episodes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                run.run_id,
                run.algorithm,
                fmt_opt(run.epsilon),
                fmt_opt(run.delta_prime),
                run.seed,
                rec.episode,
                fmt_f64(rec.instant_regret),
                fmt_f64(rec.cumulative_regret),
                rec.switch_count_so_far
            );
        }
    }
    out
}

/// Renders the mean/std curves, one row per (algorithm, episode).
pub fn render_aggregates_csv(aggregates: &[AggregateCurve]) -> String {
    let mut out = String::from(AGGREGATES_HEADER);
    out.push('\n');
    for agg in aggregates {
        for e in 0..agg.mean.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                agg.label,
                fmt_opt(agg.epsilon),
                e + 1,
                fmt_f64(agg.mean[e]),
                fmt_f64(agg.std[e]),
                agg.n[e]
            );
        }
    }
    out
}

/// One parsed row of `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub run_id: String,
    pub algorithm: String,
    pub epsilon: Option<f64>,
    pub delta_prime: Option<f64>,
    pub seed: u64,
    pub episode: usize,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
    pub switch_count_so_far: usize,
}

/// Parses an emitted `runs.csv` back into rows.
pub fn parse_runs_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RUNS_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let parse_opt = |s: &str| -> Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>().map(Some).map_err(|e| e.to_string())
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(format!("row {i}: expected 9 fields, got {}", f.len()));
        }
        rows.push(CsvRow {
            run_id: f[0].to_string(),
            algorithm: f[1].to_string(),
            epsilon: parse_opt(f[2])?,
            delta_prime: parse_opt(f[3])?,
            seed: f[4].parse().map_err(|e| format!("row {i} seed: {e}"))?,
            episode: f[5].parse().map_err(|e| format!("row {i} episode: {e}"))?,
            instant_regret: f[6].parse().map_err(|e| format!("row {i} instant: {e}"))?,
            cumulative_regret: f[7]
                .parse()
                .map_err(|e| format!("row {i} cumulative: {e}"))?,
            switch_count_so_far: f[8].parse().map_err(|e| format!("row {i} switches: {e}"))?,
        });
    }
    Ok(rows)
}
