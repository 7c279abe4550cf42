//! Paired batch evaluation of the robot controllers and the artifacts it
//! produces: summary tables, trend reports, plot data and penalty campaigns.

mod config;
mod penalty;
mod plot;
mod table;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::ModelKind;
use crate::error::{Error, Result};
use crate::sim::{generate_scenario, run_episode, ControllerKind, EpisodeConfig, EpisodeLog, Outcome, Timing};

pub use config::{AlphaSetting, RunConfig, DEFAULT_GAMMAS};
pub use penalty::{penalty_campaign, sample_penalty_state, PenaltyCampaignConfig, PenaltyReport};
pub use plot::{emit_trajectory_plot_data, emit_trajectory_svg, plot_data, render_plot_csv, render_svg, PlotData, PlotSeries, PLOT_SCHEMA};
pub use table::{emit_table, render_table, trend_report, render_trend_report, wilson_interval, TableFormat, TrendRow, Monotonicity, TABLE_SCHEMA};

/// Aggregate metrics of one (controller, γ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub controller: ControllerKind,
    pub model: ModelKind,
    /// `None` for controllers that do not use γ.
    pub gamma: Option<f64>,
    pub eta: f64,
    /// Penalty weight used by the soft formulations.
    pub alpha: Option<f64>,
    pub n_episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Mean navigation time over successful episodes.
    pub mean_time: Option<f64>,
    /// Mean number of brake decisions per episode.
    pub failures_per_episode: Option<f64>,
    /// Mean wall time per solver call (ms).
    pub mean_solve_ms: Option<f64>,
    pub solver_calls: usize,
    /// Digest of the ordered scenario fingerprints.
    pub scenario_digest: String,
}

/// Identity of a benchmark cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub controller: ControllerKind,
    pub model: ModelKind,
    pub gamma: Option<f64>,
    pub eta: f64,
    pub alpha: Option<f64>,
}

/// Metrics over `logs`, which must be given in seed order.
pub fn summarize(key: CellKey, logs: &[EpisodeLog]) -> Result<BenchmarkSummary> {
    if logs.is_empty() {
        return Err(Error::Precondition("cannot summarize an empty set of episodes".into()));
    }
    let n = logs.len();
    let count = |o: Outcome| logs.iter().filter(|l| l.outcome() == o).count();
    let (successes, collisions, timeouts) = (count(Outcome::Success), count(Outcome::Collision), count(Outcome::Timeout));
    let mean_time = (successes > 0).then(|| {
        logs.iter()
            .filter(|l| l.outcome() == Outcome::Success)
            .map(|l| l.trailer.navigation_time)
            .sum::<f64>()
            / successes as f64
    });
    let optimizing = key.controller.is_optimizing();
    let failures = logs.iter().map(|l| l.trailer.failure_count).sum::<usize>();
    let solver_calls = logs.iter().map(|l| l.trailer.solver_calls).sum::<usize>();
    let solve_ms = logs.iter().map(|l| l.trailer.total_solve_ms).sum::<f64>();
    let mut digest = Sha256::new();
    for l in logs {
        digest.update(l.header.scenario_fingerprint.as_bytes());
    }
    Ok(BenchmarkSummary {
        controller: key.controller,
        model: key.model,
        gamma: key.gamma,
        eta: key.eta,
        alpha: key.alpha,
        n_episodes: n,
        successes,
        collisions,
        timeouts,
        success_rate: successes as f64 / n as f64,
        collision_rate: collisions as f64 / n as f64,
        timeout_rate: timeouts as f64 / n as f64,
        mean_time,
        failures_per_episode: optimizing.then(|| failures as f64 / n as f64),
        mean_solve_ms: (optimizing && solver_calls > 0).then(|| solve_ms / solver_calls as f64),
        solver_calls,
        scenario_digest: digest.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect(),
    })
}

/// Episodes of one cell with their summary.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub summary: BenchmarkSummary,
    pub logs: Vec<EpisodeLog>,
}

/// Runs episodes `seed..seed + episodes` for one controller; results are in
/// seed order regardless of scheduling.
pub fn run_cell(config: &RunConfig, controller: ControllerKind, gamma: Option<f64>, alpha: Option<f64>) -> Result<CellRun> {
    let mut cc = config.controller_config(controller);
    if let Some(g) = gamma {
        cc.gamma = g;
    }
    if let Some(a) = alpha {
        cc.alpha = a;
    }
    let mut episode = EpisodeConfig::new(cc);
    episode.timing = config.timing.unwrap_or(Timing::Wall);
    let seeds: Vec<u64> = (0..config.episodes as u64).map(|i| config.seed + i).collect();
    let logs = seeds
        .par_iter()
        .map(|&seed| {
            let scenario = generate_scenario(seed, config.pedestrians)?;
            run_episode(&scenario, &episode)
        })
        .collect::<Result<Vec<_>>>()?;
    let key = CellKey {
        controller,
        model: config.model,
        gamma,
        eta: config.eta,
        alpha,
    };
    Ok(CellRun {
        summary: summarize(key, &logs)?,
        logs,
    })
}

/// Whether a controller's behavior depends on γ.
pub fn uses_gamma(kind: ControllerKind) -> bool {
    matches!(kind, ControllerKind::MpcDcbf | ControllerKind::ScmpcCbf | ControllerKind::Ours)
}

fn uses_alpha(kind: ControllerKind) -> bool {
    matches!(kind, ControllerKind::ScmpcCbf | ControllerKind::Ours)
}

/// Penalty weight for `gamma`: the configured value, or a fresh estimate.
pub fn resolve_alpha(config: &RunConfig, gamma: f64) -> Result<f64> {
    match config.alpha {
        AlphaSetting::Fixed(a) => Ok(a),
        AlphaSetting::Estimate => Ok(penalty_campaign(&config.penalty_config(gamma))?.alpha),
    }
}

/// Every configured controller on every configured γ over the same seeds.
/// Controllers that ignore γ are run once. Each finished cell is passed to
/// `on_cell` (for persistence or progress output) before the next starts.
pub fn run_benchmark_with<F>(config: &RunConfig, mut on_cell: F) -> Result<Vec<BenchmarkSummary>>
where
    F: FnMut(&CellRun) -> Result<()>,
{
    config.validate()?;
    let mut alphas: Vec<(f64, f64)> = Vec::new();
    let mut summaries = Vec::new();
    for controller in config.active_controllers() {
        let gammas: Vec<Option<f64>> = if uses_gamma(controller) {
            config.gammas.iter().map(|g| Some(*g)).collect()
        } else {
            vec![None]
        };
        for gamma in gammas {
            let alpha = match gamma {
                Some(g) if uses_alpha(controller) => Some(match alphas.iter().find(|(k, _)| *k == g) {
                    Some((_, a)) => *a,
                    None => {
                        let a = resolve_alpha(config, g)?;
                        alphas.push((g, a));
                        a
                    }
                }),
                _ => None,
            };
            let run = run_cell(config, controller, gamma, alpha)?;
            on_cell(&run)?;
            summaries.push(run.summary);
        }
    }
    sort_summaries(&mut summaries);
    Ok(summaries)
}

pub fn run_benchmark(config: &RunConfig) -> Result<Vec<BenchmarkSummary>> {
    run_benchmark_with(config, |_| Ok(()))
}

/// [`run_benchmark`] over a grid of at least two γ values.
pub fn gamma_sweep(config: &RunConfig, gammas: &[f64]) -> Result<Vec<BenchmarkSummary>> {
    if gammas.len() < 2 {
        return Err(Error::Precondition("a sweep needs at least two gamma values".into()));
    }
    let config = RunConfig {
        gammas: gammas.to_vec(),
        ..config.clone()
    };
    run_benchmark(&config)
}

/// Controller order, then γ ascending with γ-free rows first.
pub fn sort_summaries(summaries: &mut [BenchmarkSummary]) {
    summaries.sort_by(|a, b| {
        a.controller.cmp(&b.controller).then_with(|| match (a.gamma, b.gamma) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            (Some(x), Some(y)) => x.total_cmp(&y),
        })
    });
}

/// Directory name of a cell under the log root.
pub fn cell_dir_name(controller: ControllerKind, gamma: Option<f64>) -> String {
    match gamma {
        Some(g) => format!("{}_gamma{g:.2}", controller.key()),
        None => controller.key().to_string(),
    }
}

/// Writes every episode of `run` as `seed_<seed>.jsonl` under
/// `root/<cell>/`, plus the cell key.
pub fn persist_cell(root: &Path, run: &CellRun) -> Result<PathBuf> {
    let dir = root.join(cell_dir_name(run.summary.controller, run.summary.gamma));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for log in &run.logs {
        log.write_jsonl(&dir.join(format!("seed_{}.jsonl", log.header.seed)))?;
    }
    Ok(dir)
}

/// Recomputes cell summaries from logs persisted by [`persist_cell`].
pub fn summarize_log_dir(root: &Path) -> Result<Vec<BenchmarkSummary>> {
    let mut cells: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    cells.sort();
    let mut summaries = Vec::new();
    for dir in cells {
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        let mut logs = files
            .drain(..)
            .map(|p| EpisodeLog::read_jsonl(&p))
            .collect::<Result<Vec<_>>>()?;
        if logs.is_empty() {
            continue;
        }
        logs.sort_by_key(|l| l.header.seed);
        let c = &logs[0].header.config.controller;
        let key = CellKey {
            controller: c.kind,
            model: c.model,
            gamma: uses_gamma(c.kind).then_some(c.gamma),
            eta: c.eta,
            alpha: uses_alpha(c.kind).then_some(c.alpha),
        };
        summaries.push(summarize(key, &logs)?);
    }
    sort_summaries(&mut summaries);
    Ok(summaries)
}

/// The single episode described by `config`: one controller (default
/// [`ControllerKind::Ours`]) at the first configured γ on scenario
/// `config.seed`. Timing defaults to none so the log is reproducible.
pub fn run_configured_episode(config: &RunConfig) -> Result<EpisodeLog> {
    config.validate()?;
    let controller = match config.controllers.as_slice() {
        [] => ControllerKind::Ours,
        [c] => *c,
        _ => return Err(Error::Config("an episode runs exactly one controller".into())),
    };
    let gamma = &config.gammas[0];
    let mut cc = config.controller_config(controller);
    cc.gamma = *gamma;
    if uses_alpha(controller) {
        cc.alpha = resolve_alpha(config, *gamma)?;
    }
    let mut episode = EpisodeConfig::new(cc);
    episode.timing = config.timing.unwrap_or(Timing::None);
    let scenario = generate_scenario(config.seed, config.pedestrians)?;
    run_episode(&scenario, &episode)
}
