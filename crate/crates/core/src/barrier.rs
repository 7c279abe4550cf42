//! Obstacle-clearance barrier functions and the discrete-time CBF conditions
//! built on them.
//!
//! The barrier is the center distance minus the combined safe radius, so it is
//! measured in meters and is positive strictly inside the safe set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelKind, SystemModel};
use crate::error::{Error, Result};

/// Distances below this are clamped when forming the barrier gradient.
pub const MIN_CENTER_DISTANCE: f64 = 1e-9;

/// Sensitivities above this count as "the input reaches the barrier".
pub const SENSITIVITY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub robot_radius: f64,
    /// Extra safety margin added to the combined radius.
    pub margin: f64,
    /// Per-step decay rate of the hard/soft CBF condition.
    pub gamma: f64,
    /// Decay rate of the single-step generalized condition, `η ∈ (γ, 1]`.
    pub eta: f64,
    pub relative_degree: usize,
}

impl Default for BarrierSpec {
    fn default() -> Self {
        BarrierSpec {
            robot_radius: 0.3,
            margin: 0.0,
            gamma: 0.1,
            eta: 0.3,
            relative_degree: 2,
        }
    }
}

impl BarrierSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        // η = 1 is also accepted at γ = 1.
        let eta_ok = (self.eta > self.gamma || self.eta == 1.0) && self.eta <= 1.0;
        if !eta_ok {
            return Err(Error::Config(format!(
                "eta must lie in (gamma, 1] = ({}, 1], got {}",
                self.gamma, self.eta
            )));
        }
        if self.relative_degree == 0 {
            return Err(Error::Config("relative degree must be at least 1".into()));
        }
        if !(self.margin >= 0.0) || !(self.robot_radius >= 0.0) {
            return Err(Error::Config("radius and margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// `r_i = r_r + r_o + ε`.
pub fn combined_radius(spec: &BarrierSpec, obstacle_radius: f64) -> f64 {
    spec.robot_radius + obstacle_radius + spec.margin
}

/// Center distance minus the combined radius.
pub fn h_value(robot_xy: (f64, f64), obstacle_xy: (f64, f64), r_i: f64) -> f64 {
    let dx = robot_xy.0 - obstacle_xy.0;
    let dy = robot_xy.1 - obstacle_xy.1;
    dx.hypot(dy) - r_i
}

/// Gradient of [`h_value`] with respect to the robot position.
pub fn h_gradient(robot_xy: (f64, f64), obstacle_xy: (f64, f64)) -> (f64, f64) {
    let dx = robot_xy.0 - obstacle_xy.0;
    let dy = robot_xy.1 - obstacle_xy.1;
    let d = dx.hypot(dy).max(MIN_CENTER_DISTANCE);
    (dx / d, dy / d)
}

/// `h_next − (1−γ)·h_curr`; non-negative when the one-step condition holds.
pub fn dcbf_residual(h_next: f64, h_curr: f64, gamma: f64) -> f64 {
    h_next - (1.0 - gamma) * h_curr
}

/// `h_at_d − (1−η)^d · h_now`; non-negative when the single-step condition at
/// the relative-degree index holds.
pub fn gcbf_residual(h_at_d: f64, h_now: f64, eta: f64, d: usize) -> f64 {
    h_at_d - gcbf_decay(eta, d) * h_now
}

pub fn gcbf_decay(eta: f64, d: usize) -> f64 {
    (1.0 - eta).powi(d as i32)
}

/// One probe for [`verify_relative_degree`]: a start state, a nominal control
/// sequence and an obstacle center.
#[derive(Debug, Clone)]
pub struct DegreeProbe {
    pub state: Vec<f64>,
    pub controls: Vec<f64>,
    pub obstacle: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDegreeReport {
    pub degree: usize,
    /// Largest `|∂h(x_{t+j})/∂u_t|` seen over all probes for `j < degree`.
    pub max_sensitivity_below: f64,
    /// Smallest `|∂h(x_{t+d})/∂u_t|` over all probes.
    pub min_sensitivity_at: f64,
}

/// Central-difference sensitivity `|∂h(x_{t+j})/∂u_t|` (∞-norm over input
/// components) for `j = 1..=max_j`.
pub fn barrier_sensitivities(model: &SystemModel, probe: &DegreeProbe, max_j: usize) -> Vec<f64> {
    const STEP: f64 = 1e-6;
    let m = model.input_dim();
    let h_along = |controls: &[f64]| -> Vec<f64> {
        let mut x = probe.state.clone();
        let mut out = Vec::with_capacity(max_j);
        for k in 0..max_j {
            x = model.step_raw(&x, &controls[k * m..(k + 1) * m]);
            out.push(h_value((x[0], x[1]), probe.obstacle, 0.0));
        }
        out
    };
    let mut sens = vec![0.0f64; max_j];
    for l in 0..m {
        let mut plus = probe.controls.clone();
        let mut minus = probe.controls.clone();
        plus[l] += STEP;
        minus[l] -= STEP;
        let hp = h_along(&plus);
        let hm = h_along(&minus);
        for j in 0..max_j {
            sens[j] = sens[j].max(((hp[j] - hm[j]) / (2.0 * STEP)).abs());
        }
    }
    sens
}

/// Numerically determines the relative degree of the position barrier and
/// checks it against `model.relative_degree`.
pub fn verify_relative_degree(
    model: &SystemModel,
    probes: &[DegreeProbe],
) -> Result<RelativeDegreeReport> {
    if probes.is_empty() {
        return Err(Error::Precondition("need at least one probe".into()));
    }
    let max_j = model.relative_degree + 2;
    let mut degree = None;
    let mut below = 0.0f64;
    let mut at = f64::INFINITY;
    for probe in probes {
        if probe.controls.len() < max_j * model.input_dim() {
            return Err(Error::Precondition(format!(
                "probe needs {} controls",
                max_j * model.input_dim()
            )));
        }
        let sens = barrier_sensitivities(model, probe, max_j);
        let d = sens
            .iter()
            .position(|s| *s > SENSITIVITY_THRESHOLD)
            .map(|j| j + 1)
            .ok_or_else(|| {
                Error::Config("barrier insensitive to the input over the probed window".into())
            })?;
        match degree {
            None => degree = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::Config(format!(
                    "inconsistent relative degree across samples: {prev} vs {d}"
                )))
            }
            _ => {}
        }
        below = sens[..d - 1].iter().fold(below, |a, s| a.max(*s));
        at = at.min(sens[d - 1]);
    }
    let degree = degree.expect("at least one probe");
    if degree != model.relative_degree {
        return Err(Error::Config(format!(
            "declared relative degree {} but measured {degree}",
            model.relative_degree
        )));
    }
    Ok(RelativeDegreeReport {
        degree,
        max_sensitivity_below: below,
        min_sensitivity_at: at,
    })
}

/// Draws random probes inside the model's boxes, resampling configurations
/// where the first input-to-barrier path is tangent to the obstacle direction.
pub fn sample_degree_probes<R: Rng>(model: &SystemModel, count: usize, rng: &mut R) -> Vec<DegreeProbe> {
    let m = model.input_dim();
    let window = model.relative_degree + 2;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let state: Vec<f64> = match model.kind {
            ModelKind::DoubleIntegrator => vec![
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ],
            ModelKind::Unicycle => vec![
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            ],
        };
        let controls: Vec<f64> = (0..window * m)
            .map(|i| {
                let b = model.input_bounds[i % m];
                rng.gen_range(b.lo..=b.hi)
            })
            .collect();
        let obstacle = (state[0] + rng.gen_range(-3.0..3.0), state[1] + rng.gen_range(-3.0..3.0));
        let (dx, dy) = (state[0] - obstacle.0, state[1] - obstacle.1);
        let dist = dx.hypot(dy);
        if dist < 0.5 {
            continue;
        }
        if model.kind == ModelKind::Unicycle {
            // ∂h(x_1)/∂v ∝ cos of the angle between heading and obstacle direction
            let cos = (dx * state[2].cos() + dy * state[2].sin()) / dist;
            if cos.abs() < 0.05 {
                continue;
            }
        }
        out.push(DegreeProbe {
            state,
            controls,
            obstacle,
        });
    }
    out
}
