use serde::{Deserialize, Serialize};

use super::linalg::norm_inf;
use super::{solve, NonlinearProgram, SolverConfig, SolverStatus};
use crate::dynamics::{ObstacleTrack, RobotState, SystemModel};
use crate::error::{Error, Result};
use crate::ocp::{build, Formulation, OcpSpec};

/// Lower bound applied when every sampled multiplier vanishes.
pub const PENALTY_FLOOR: f64 = 1.0;

/// Outcome of one sampled hard-constrained solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySample {
    pub index: usize,
    pub status: SolverStatus,
    /// `‖λ‖∞` over the CBF rows; `None` when the sample was skipped.
    pub multiplier_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEstimate {
    pub alpha: f64,
    pub max_multiplier_norm: f64,
    pub safety_factor: f64,
    pub samples: Vec<PenaltySample>,
    /// Samples whose hard problem did not solve.
    pub skipped: usize,
    /// Set when the maximum multiplier norm was zero and the floor was used.
    pub floored: bool,
}

/// `safety_factor · max_s ‖λ_s‖∞`, floored at `floor` when the product is
/// zero. Returns the weight and whether the floor applied.
pub fn penalty_from_multiplier_norms(
    multiplier_sets: &[Vec<f64>],
    safety_factor: f64,
    floor: f64,
) -> (f64, bool) {
    let max = multiplier_sets
        .iter()
        .map(|l| norm_inf(l))
        .fold(0.0f64, f64::max);
    let alpha = safety_factor * max;
    if alpha > 0.0 {
        (alpha, false)
    } else {
        (floor, true)
    }
}

/// Estimates the exact-penalty weight by solving the hard CBF problem at
/// `n_samples` sampled states and scaling the largest CBF multiplier norm.
///
/// `sampler(s)` returns the robot state and obstacle tracks for sample `s`.
/// Samples where the hard problem is not solved are skipped and counted.
pub fn estimate_penalty_weight<F>(
    spec: &OcpSpec,
    model: &SystemModel,
    mut sampler: F,
    n_samples: usize,
    safety_factor: f64,
    config: &SolverConfig,
) -> Result<PenaltyEstimate>
where
    F: FnMut(usize) -> (RobotState, Vec<ObstacleTrack>),
{
    if n_samples == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    if !(safety_factor > 0.0) || !safety_factor.is_finite() {
        return Err(Error::Config(format!(
            "safety factor must be positive and finite, got {safety_factor}"
        )));
    }
    let hard = OcpSpec {
        formulation: Formulation::MpcDcbf,
        ..spec.clone()
    };
    let mut samples = Vec::with_capacity(n_samples);
    let mut solved_sets = Vec::new();
    for index in 0..n_samples {
        let (x0, obstacles) = sampler(index);
        let problem = build(&hard, model, &x0, &obstacles)?;
        let result = solve(&problem, config);
        let multiplier_norm = if result.status == SolverStatus::Solved {
            let cbf: Vec<f64> = problem
                .row_labels()
                .iter()
                .zip(&result.multipliers)
                .filter(|(l, _)| l.is_cbf())
                .map(|(_, v)| *v)
                .collect();
            let norm = norm_inf(&cbf);
            solved_sets.push(cbf);
            Some(norm)
        } else {
            None
        };
        samples.push(PenaltySample {
            index,
            status: result.status,
            multiplier_norm,
        });
    }
    if solved_sets.is_empty() {
        return Err(Error::Estimation(format!(
            "the hard CBF problem failed on all {n_samples} samples"
        )));
    }
    let (alpha, floored) = penalty_from_multiplier_norms(&solved_sets, safety_factor, PENALTY_FLOOR);
    let max_multiplier_norm = solved_sets.iter().map(|l| norm_inf(l)).fold(0.0, f64::max);
    Ok(PenaltyEstimate {
        alpha,
        max_multiplier_norm,
        safety_factor,
        skipped: n_samples - solved_sets.len(),
        samples,
        floored,
    })
}
