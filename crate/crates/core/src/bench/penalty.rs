use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelKind, ObstacleTrack, RobotState, SystemModel};
use crate::error::{Error, Result};
use crate::orca::OrcaAgentParams;
use crate::sim::{generate_scenario, pedestrian_velocities, ControllerConfig, ControllerKind, PedestrianState, ScenarioParams};
use crate::solver::{estimate_penalty_weight, PenaltySample};

/// Pedestrian steps simulated before a sample is taken are drawn from
/// `0..=MAX_WARMUP_STEPS`.
const MAX_WARMUP_STEPS: usize = 40;

const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyCampaignConfig {
    pub model: ModelKind,
    pub gamma: f64,
    pub eta: f64,
    pub horizon: usize,
    pub n_samples: usize,
    /// Must exceed 1 so the recommended weight is strictly above every
    /// sampled multiplier norm.
    pub safety_factor: f64,
    pub seed: u64,
    pub pedestrians: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyReport {
    pub config: PenaltyCampaignConfig,
    pub samples: Vec<PenaltySample>,
    /// Counts of `‖λ‖∞` over the solved samples in equal-width bins.
    pub histogram: Vec<HistogramBin>,
    pub max_multiplier_norm: f64,
    pub alpha: f64,
    pub skipped: usize,
    pub floored: bool,
}

/// A state from the circle-crossing distribution: pedestrians after a random
/// number of ORCA steps, the robot somewhere on its straight route heading
/// for the goal.
pub fn sample_penalty_state(config: &PenaltyCampaignConfig, index: usize) -> Result<(RobotState, Vec<ObstacleTrack>)> {
    let seed = config.seed.wrapping_add(index as u64);
    let scenario = generate_scenario(seed, config.pedestrians)?;
    let params = ScenarioParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let ped = OrcaAgentParams {
        radius: params.pedestrian_radius,
        ..OrcaAgentParams::default()
    };
    let goals: Vec<(f64, f64)> = scenario.pedestrians.iter().map(|p| p.goal).collect();
    let mut peds: Vec<PedestrianState> = scenario
        .pedestrians
        .iter()
        .map(|p| PedestrianState {
            position: p.start,
            velocity: (0.0, 0.0),
        })
        .collect();
    for _ in 0..rng.gen_range(0..=MAX_WARMUP_STEPS) {
        let v = pedestrian_velocities(&peds, &goals, &ped, params.dt);
        for (p, v) in peds.iter_mut().zip(v) {
            p.position = (p.position.0 + v.0 * params.dt, p.position.1 + v.1 * params.dt);
            p.velocity = v;
        }
    }

    let (sx, sy) = params.robot_start;
    let (gx, gy) = params.robot_goal;
    let f = rng.gen_range(0.0..1.0);
    let (x, y) = (sx + f * (gx - sx), sy + f * (gy - sy));
    let heading = (gy - sy).atan2(gx - sx);
    let robot = match config.model {
        ModelKind::DoubleIntegrator => {
            let speed = rng.gen_range(0.0..1.0);
            RobotState::DoubleIntegrator {
                x,
                y,
                vx: speed * heading.cos(),
                vy: speed * heading.sin(),
            }
        }
        ModelKind::Unicycle => RobotState::Unicycle {
            x,
            y,
            theta: heading + rng.gen_range(-0.5..0.5),
        },
    };
    let tracks = peds
        .iter()
        .map(|p| ObstacleTrack::new(p.position.0, p.position.1, p.velocity.0, p.velocity.1, params.pedestrian_radius))
        .collect();
    Ok((robot, tracks))
}

fn histogram(values: &[f64], max: f64) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let width = if max > 0.0 { max / HISTOGRAM_BINS as f64 } else { 1.0 };
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lo: b as f64 * width,
            hi: (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in values {
        let b = ((v / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[b].count += 1;
    }
    bins
}

/// Estimates the exact-penalty weight for the hard CBF problem over sampled
/// circle-crossing states.
pub fn penalty_campaign(config: &PenaltyCampaignConfig) -> Result<PenaltyReport> {
    if config.n_samples == 0 {
        return Err(Error::Precondition("the penalty campaign needs at least one sample".into()));
    }
    if !(config.safety_factor > 1.0 && config.safety_factor.is_finite()) {
        return Err(Error::Config(format!(
            "safety factor must be greater than 1, got {}",
            config.safety_factor
        )));
    }
    let params = ScenarioParams::default();
    let model = SystemModel::for_kind(config.model, params.dt);
    let mut cc = ControllerConfig::new(ControllerKind::MpcDcbf, config.model);
    cc.horizon = config.horizon;
    cc.gamma = config.gamma;
    cc.eta = config.eta;
    let spec = cc
        .ocp_spec(&model, params.robot_goal, params.robot_radius)
        .expect("the hard CBF controller has a formulation");
    let states = (0..config.n_samples)
        .map(|i| sample_penalty_state(config, i))
        .collect::<Result<Vec<_>>>()?;
    let estimate = estimate_penalty_weight(
        &spec,
        &model,
        |i| states[i].clone(),
        config.n_samples,
        config.safety_factor,
        &cc.solver,
    )?;
    let norms: Vec<f64> = estimate.samples.iter().filter_map(|s| s.multiplier_norm).collect();
    Ok(PenaltyReport {
        config: config.clone(),
        histogram: histogram(&norms, estimate.max_multiplier_norm),
        max_multiplier_norm: estimate.max_multiplier_norm,
        alpha: estimate.alpha,
        skipped: estimate.skipped,
        floored: estimate.floored,
        samples: estimate.samples,
    })
}

impl PenaltyReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "penalty campaign: model={} gamma={} samples={} solved={} skipped={}\n",
            self.config.model.key(),
            self.config.gamma,
            self.samples.len(),
            self.samples.len() - self.skipped,
            self.skipped
        );
        out.push_str(&format!("max |lambda|_inf = {:.6}\n", self.max_multiplier_norm));
        out.push_str(&format!(
            "recommended alpha = {:.6} (safety factor {}){}\n",
            self.alpha,
            self.config.safety_factor,
            if self.floored { ", floored" } else { "" }
        ));
        for b in &self.histogram {
            out.push_str(&format!("  [{:>10.4}, {:>10.4}) {}\n", b.lo, b.hi, b.count));
        }
        out
    }
}
