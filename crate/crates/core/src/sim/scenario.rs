use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Rejections allowed before scenario generation gives up.
pub const MAX_REJECTIONS: usize = 1000;

/// Knobs of the circle-crossing distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    /// Half the side of the square workspace centered at the origin.
    pub half_width: f64,
    pub circle_radius: f64,
    pub dt: f64,
    pub time_limit: f64,
    pub robot_start: (f64, f64),
    pub robot_goal: (f64, f64),
    pub robot_radius: f64,
    pub pedestrian_radius: f64,
    /// Angular noise half-width (rad).
    pub angular_noise: f64,
    /// Radial noise half-width (m).
    pub radial_noise: f64,
    /// Minimum surface-to-surface distance between sampled agents.
    pub min_clearance: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            half_width: 5.0,
            circle_radius: 4.0,
            dt: 0.2,
            time_limit: 25.0,
            robot_start: (0.0, -4.0),
            robot_goal: (0.0, 4.0),
            robot_radius: 0.3,
            pedestrian_radius: 0.3,
            angular_noise: 0.1,
            radial_noise: 0.2,
            min_clearance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSpec {
    pub start: (f64, f64),
    pub goal: (f64, f64),
}

impl PedestrianSpec {
    /// A pedestrian that stays where it starts.
    pub fn stationary(position: (f64, f64)) -> Self {
        PedestrianSpec {
            start: position,
            goal: position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub params: ScenarioParams,
    pub pedestrians: Vec<PedestrianSpec>,
}

impl Scenario {
    pub fn n_pedestrians(&self) -> usize {
        self.pedestrians.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let positive = [p.half_width, p.dt, p.time_limit, p.robot_radius, p.pedestrian_radius];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("scenario parameters must be positive: {p:?}")));
        }
        let points = self
            .pedestrians
            .iter()
            .flat_map(|s| [s.start, s.goal])
            .chain([p.robot_start, p.robot_goal]);
        for (x, y) in points {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::Config("scenario positions must be finite".into()));
            }
        }
        Ok(())
    }

    /// Hex digest identifying the scenario contents.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(bytes)
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn on_circle(radius: f64, angle: f64) -> (f64, f64) {
    (radius * angle.cos(), radius * angle.sin())
}

fn noise(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.gen_range(-half_width..half_width)
    } else {
        0.0
    }
}

fn clearance(a: (f64, f64), b: (f64, f64), ra: f64, rb: f64) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1) - ra - rb
}

/// Circle-crossing scenario with default parameters.
pub fn generate_scenario(seed: u64, n_pedestrians: usize) -> Result<Scenario> {
    generate_scenario_with(&ScenarioParams::default(), seed, n_pedestrians)
}

/// Pedestrian `i` starts near angle `θ_i ~ U(0, 2π)` on the circle and heads
/// for the perturbed antipode. Starts are resampled until every pair of
/// agents (robot included) keeps the minimum clearance; goals likewise among
/// pedestrians.
pub fn generate_scenario_with(params: &ScenarioParams, seed: u64, n_pedestrians: usize) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_ped = params.pedestrian_radius;
    let mut pedestrians: Vec<PedestrianSpec> = Vec::with_capacity(n_pedestrians);
    let mut rejections = 0;
    while pedestrians.len() < n_pedestrians {
        let theta = rng.gen_range(0.0..TAU);
        let start = on_circle(
            params.circle_radius + noise(&mut rng, params.radial_noise),
            theta + noise(&mut rng, params.angular_noise),
        );
        let goal = on_circle(
            params.circle_radius + noise(&mut rng, params.radial_noise),
            theta + PI + noise(&mut rng, params.angular_noise),
        );
        let ok = clearance(start, params.robot_start, r_ped, params.robot_radius) >= params.min_clearance
            && pedestrians.iter().all(|p| {
                clearance(start, p.start, r_ped, r_ped) >= params.min_clearance
                    && clearance(goal, p.goal, r_ped, r_ped) >= params.min_clearance
            });
        if ok {
            pedestrians.push(PedestrianSpec { start, goal });
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::Scenario(format!(
                    "could not place {n_pedestrians} pedestrians after {MAX_REJECTIONS} rejections (seed {seed})"
                )));
            }
        }
    }
    Ok(Scenario {
        seed,
        params: *params,
        pedestrians,
    })
}
