use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safenav::bench::{
    cell_dir_name, emit_table, emit_trajectory_plot_data, emit_trajectory_svg, penalty_campaign,
    persist_cell, render_table, render_trend_report, run_benchmark_with, run_configured_episode, summarize_log_dir,
    trend_report, AlphaSetting, BenchmarkSummary, RunConfig, TableFormat,
};
use safenav::dynamics::ModelKind;
use safenav::sim::{ControllerKind, Timing};
use safenav::{Error, Result};

/// Episode count used by `--full`.
const FULL_EPISODES: usize = 500;

#[derive(Parser)]
#[command(name = "safenav", version, about = "Safe crowd navigation with soft-constrained CBF MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded episode and write its log and plot data.
    Episode(RunArgs),
    /// Run a paired batch and emit the summary table.
    Bench(RunArgs),
    /// Run a batch over a grid of gamma values and report trends.
    Sweep(RunArgs),
    /// Estimate the exact-penalty weight over sampled crowd states.
    EstimateAlpha(RunArgs),
    /// Recompute summary tables from persisted episode logs.
    Summarize {
        /// Directory holding one subdirectory of logs per cell.
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// di or unicycle.
    #[arg(long)]
    model: Option<String>,
    /// orca, mpc-dc, mpc-dcbf, scmpc-cbf or ours; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    controller: Vec<String>,
    /// Repeat or comma-separate for several values.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// A number or "estimate".
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Run 500 episodes per cell.
    #[arg(long, conflicts_with = "episodes")]
    full: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pedestrians: Option<usize>,
    /// wall or none.
    #[arg(long)]
    timing: Option<String>,
    /// Samples for the penalty-weight estimate.
    #[arg(long)]
    penalty_samples: Option<usize>,
    #[arg(long)]
    safety_factor: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            c.model = ModelKind::parse(m)?;
        }
        if !self.controller.is_empty() {
            c.controllers = self
                .controller
                .iter()
                .map(|s| ControllerKind::parse(s))
                .collect::<Result<_>>()?;
        }
        if !self.gamma.is_empty() {
            c.gammas = self.gamma.clone();
        }
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if let Some(a) = &self.alpha {
            c.alpha = a.parse::<AlphaSetting>()?;
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        if let Some(v) = self.episodes {
            c.episodes = v;
        }
        if self.full {
            c.episodes = FULL_EPISODES;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.pedestrians {
            c.pedestrians = v;
        }
        if let Some(t) = &self.timing {
            c.timing = Some(match t.as_str() {
                "wall" => Timing::Wall,
                "none" => Timing::None,
                other => return Err(Error::Config(format!("timing must be 'wall' or 'none', got '{other}'"))),
            });
        }
        if let Some(v) = self.penalty_samples {
            c.penalty_samples = v;
        }
        if let Some(v) = self.safety_factor {
            c.safety_factor = v;
        }
        if let Some(o) = &self.out {
            c.out = Some(o.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn out_dir(config: &RunConfig, default: &str) -> Result<PathBuf> {
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn episode(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let dir = out_dir(&config, "out")?;
    let log = run_configured_episode(&config)?;
    let seed = config.seed;
    let log_path = dir.join(format!("episode_seed{seed}.jsonl"));
    log.write_jsonl(&log_path)?;
    emit_trajectory_plot_data(&log, &dir.join(format!("trajectory_seed{seed}.csv")))?;
    emit_trajectory_svg(&log, &dir.join(format!("trajectory_seed{seed}.svg")))?;
    let c = &log.header.config.controller;
    println!(
        "seed {seed} {} ({}): {:?} at t = {:.1} s, {} solver failures; log {}",
        c.kind.label(),
        c.model.key(),
        log.outcome(),
        log.trailer.navigation_time,
        log.trailer.failure_count,
        log_path.display()
    );
    Ok(())
}

fn emit_summaries(dir: &Path, summaries: &[BenchmarkSummary]) -> Result<()> {
    emit_table(summaries, TableFormat::Csv, &dir.join("summary.csv"))?;
    emit_table(summaries, TableFormat::Text, &dir.join("summary.txt"))?;
    let json = serde_json::to_string_pretty(summaries).expect("summaries serialize");
    write(&dir.join("summary.json"), &(json + "\n"))
}

fn batch(args: &RunArgs, sweep: bool) -> Result<()> {
    let mut config = args.resolve()?;
    if sweep && config.gammas.len() < 2 {
        return Err(Error::Config("a sweep needs at least two gamma values".into()));
    }
    let dir = out_dir(&config, "results")?;
    let logs = dir.join("logs");
    config.timing = Some(config.timing.unwrap_or(Timing::Wall));
    write(&dir.join("config.toml"), &config.to_toml_string())?;
    let summaries = run_cells(&config, &logs)?;
    emit_summaries(&dir, &summaries)?;
    print!("{}", render_table(&summaries, TableFormat::Text));
    if sweep {
        let report = render_trend_report(&trend_report(&summaries));
        write(&dir.join("trend.txt"), &report)?;
        print!("{report}");
    }
    Ok(())
}

fn run_cells(config: &RunConfig, logs: &Path) -> Result<Vec<BenchmarkSummary>> {
    run_benchmark_with(config, |run| {
        persist_cell(logs, run)?;
        let s = &run.summary;
        eprintln!(
            "{}: S {:.3} C {:.3} over {} episodes",
            cell_dir_name(s.controller, s.gamma),
            s.success_rate,
            s.collision_rate,
            s.n_episodes
        );
        Ok(())
    })
}

fn estimate_alpha(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let mut reports = Vec::new();
    for gamma in &config.gammas {
        let report = penalty_campaign(&config.penalty_config(*gamma))?;
        print!("{}", report.render_text());
        reports.push(report);
    }
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        write(&dir.join(format!("alpha_{}.json", config.model.key())), &(json + "\n"))?;
    }
    Ok(())
}

fn summarize(logs: &Path, out: Option<&Path>) -> Result<()> {
    let summaries = summarize_log_dir(logs)?;
    if summaries.is_empty() {
        return Err(Error::Precondition(format!("no episode logs under {}", logs.display())));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        emit_summaries(dir, &summaries)?;
    }
    print!("{}", render_table(&summaries, TableFormat::Text));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Episode(a) => episode(a),
        Command::Bench(a) => batch(a, false),
        Command::Sweep(a) => batch(a, true),
        Command::EstimateAlpha(a) => estimate_alpha(a),
        Command::Summarize { logs, out } => summarize(logs, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
