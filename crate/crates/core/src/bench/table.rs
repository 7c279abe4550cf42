use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{uses_gamma, BenchmarkSummary};
use crate::error::{Error, Result};
use crate::sim::ControllerKind;

pub const TABLE_SCHEMA: &str = "safenav-table/1";

const COLUMNS: [&str; 9] = ["Controller", "gamma", "S", "C", "T", "FS", "ST", "timeout_rate", "n"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Text,
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

fn row(s: &BenchmarkSummary) -> [String; 9] {
    [
        s.controller.label().to_string(),
        s.gamma.map(|g| format!("{g:.2}")).unwrap_or_else(|| "-".into()),
        format!("{:.3}", s.success_rate),
        format!("{:.3}", s.collision_rate),
        opt(s.mean_time, 2),
        opt(s.failures_per_episode, 3),
        opt(s.mean_solve_ms, 2),
        format!("{:.3}", s.timeout_rate),
        s.n_episodes.to_string(),
    ]
}

/// Renders the summary table. Both formats start with a `# schema:` line.
pub fn render_table(summaries: &[BenchmarkSummary], format: TableFormat) -> String {
    let mut out = format!("# schema: {TABLE_SCHEMA}\n");
    let rows: Vec<[String; 9]> = summaries.iter().map(row).collect();
    match format {
        TableFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for r in &rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        TableFormat::Text => {
            let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
            for r in &rows {
                for (w, cell) in widths.iter_mut().zip(r) {
                    *w = (*w).max(cell.len());
                }
            }
            let line = |cells: &[&str]| -> String {
                let parts: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                parts.join("  ").trim_end().to_string() + "\n"
            };
            out.push_str(&line(&COLUMNS));
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
            for r in &rows {
                let cells: Vec<&str> = r.iter().map(String::as_str).collect();
                out.push_str(&line(&cells));
            }
        }
    }
    out
}

/// Writes the table to `path`.
pub fn emit_table(summaries: &[BenchmarkSummary], format: TableFormat, path: &Path) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::Precondition("no summaries to tabulate".into()));
    }
    fs::write(path, render_table(summaries, format)).map_err(|e| Error::io(path, e))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Constant,
    NonIncreasing,
    NonDecreasing,
    Mixed,
    /// Fewer than two defined values.
    Undetermined,
}

impl Monotonicity {
    pub fn of(values: &[f64]) -> Self {
        if values.len() < 2 {
            return Monotonicity::Undetermined;
        }
        let up = values.windows(2).all(|w| w[1] >= w[0]);
        let down = values.windows(2).all(|w| w[1] <= w[0]);
        match (up, down) {
            (true, true) => Monotonicity::Constant,
            (true, false) => Monotonicity::NonDecreasing,
            (false, true) => Monotonicity::NonIncreasing,
            (false, false) => Monotonicity::Mixed,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Monotonicity::Constant => "constant",
            Monotonicity::NonIncreasing => "non-increasing",
            Monotonicity::NonDecreasing => "non-decreasing",
            Monotonicity::Mixed => "mixed",
            Monotonicity::Undetermined => "undetermined",
        }
    }
}

/// How S and T of one controller move along the γ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub controller: ControllerKind,
    pub gammas: Vec<f64>,
    pub success_rates: Vec<f64>,
    /// 95% Wilson intervals of the success rates.
    pub success_intervals: Vec<(f64, f64)>,
    pub mean_times: Vec<Option<f64>>,
    pub success_trend: Monotonicity,
    /// Trend over the γ values that had at least one success.
    pub time_trend: Monotonicity,
}

pub fn trend_report(summaries: &[BenchmarkSummary]) -> Vec<TrendRow> {
    let mut controllers: Vec<ControllerKind> = summaries
        .iter()
        .filter(|s| uses_gamma(s.controller) && s.gamma.is_some())
        .map(|s| s.controller)
        .collect();
    controllers.sort();
    controllers.dedup();
    controllers
        .into_iter()
        .map(|c| {
            let mut rows: Vec<&BenchmarkSummary> = summaries
                .iter()
                .filter(|s| s.controller == c && s.gamma.is_some())
                .collect();
            rows.sort_by(|a, b| a.gamma.unwrap().total_cmp(&b.gamma.unwrap()));
            let success_rates: Vec<f64> = rows.iter().map(|s| s.success_rate).collect();
            let mean_times: Vec<Option<f64>> = rows.iter().map(|s| s.mean_time).collect();
            let defined_times: Vec<f64> = mean_times.iter().flatten().copied().collect();
            TrendRow {
                controller: c,
                gammas: rows.iter().map(|s| s.gamma.unwrap()).collect(),
                success_intervals: rows.iter().map(|s| wilson_interval(s.successes, s.n_episodes, 1.96)).collect(),
                success_trend: Monotonicity::of(&success_rates),
                time_trend: Monotonicity::of(&defined_times),
                success_rates,
                mean_times,
            }
        })
        .collect()
}

pub fn render_trend_report(rows: &[TrendRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(out, "{}:", r.controller.label());
        for i in 0..r.gammas.len() {
            let (lo, hi) = r.success_intervals[i];
            let _ = writeln!(
                out,
                "  gamma {:.2}  S {:.3} [{lo:.3}, {hi:.3}]  T {}",
                r.gammas[i],
                r.success_rates[i],
                opt(r.mean_times[i], 2)
            );
        }
        let _ = writeln!(out, "  S vs gamma: {}", r.success_trend.label());
        let _ = writeln!(out, "  T vs gamma: {}", r.time_trend.label());
    }
    out
}
