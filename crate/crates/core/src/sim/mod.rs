//! Deterministic circle-crossing episodes: a robot controller among
//! ORCA-driven pedestrians that ignore the robot.

mod controller;
mod log;
mod scenario;

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::barrier::h_value;
use crate::dynamics::{ModelKind, ObstacleTrack, RobotState};
use crate::error::Result;
use crate::orca::{compute_velocity, preferred_velocity, select_neighbors, AgentState, OrcaAgentParams};

pub use controller::{apply_brake, ControlDecision, Controller, ControllerConfig, ControllerKind, StepResult};
pub use log::{EpisodeHeader, EpisodeLog, EpisodeTrailer, StepRecord, LOG_SCHEMA};
pub use scenario::{
    generate_scenario, generate_scenario_with, PedestrianSpec, Scenario, ScenarioParams, MAX_REJECTIONS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
}

/// Whether wall-clock solve times are recorded. Logs without timing are
/// reproducible byte for byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Wall,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub controller: ControllerConfig,
    pub pedestrian: OrcaAgentParams,
    /// Distance to the goal point that counts as arrival.
    pub goal_tolerance: f64,
    pub timing: Timing,
}

impl EpisodeConfig {
    pub fn new(controller: ControllerConfig) -> Self {
        EpisodeConfig {
            controller,
            pedestrian: OrcaAgentParams::default(),
            goal_tolerance: 0.3,
            timing: Timing::Wall,
        }
    }
}

/// A pedestrian during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub position: (f64, f64),
    pub velocity: (f64, f64),
}

/// Initial robot state at the scenario start, at rest. The unicycle faces
/// its goal.
pub fn initial_robot_state(kind: ModelKind, scenario: &Scenario) -> RobotState {
    let (x, y) = scenario.params.robot_start;
    match kind {
        ModelKind::DoubleIntegrator => RobotState::DoubleIntegrator { x, y, vx: 0.0, vy: 0.0 },
        ModelKind::Unicycle => {
            let (gx, gy) = scenario.params.robot_goal;
            let theta = if (gx, gy) == (x, y) { FRAC_PI_2 } else { (gy - y).atan2(gx - x) };
            RobotState::Unicycle { x, y, theta }
        }
    }
}

/// Synchronous ORCA update of all pedestrians from one snapshot. The robot is
/// not among anyone's neighbors.
pub fn pedestrian_velocities(
    pedestrians: &[PedestrianState],
    goals: &[(f64, f64)],
    params: &OrcaAgentParams,
    dt: f64,
) -> Vec<(f64, f64)> {
    let agents: Vec<AgentState> = pedestrians
        .iter()
        .map(|p| AgentState {
            position: p.position,
            velocity: p.velocity,
            radius: params.radius,
        })
        .collect();
    (0..agents.len())
        .map(|i| {
            let others: Vec<AgentState> = agents
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, a)| *a)
                .collect();
            let neighbors: Vec<AgentState> = select_neighbors(&agents[i], &others, params)
                .into_iter()
                .map(|j| others[j])
                .collect();
            let pref = preferred_velocity(agents[i].position, goals[i], params.preferred_speed, dt);
            compute_velocity(&agents[i], &neighbors, params, pref, dt)
        })
        .collect()
}

fn tracks(pedestrians: &[PedestrianState], radius: f64) -> Vec<ObstacleTrack> {
    pedestrians
        .iter()
        .map(|p| ObstacleTrack::new(p.position.0, p.position.1, p.velocity.0, p.velocity.1, radius))
        .collect()
}

/// Smallest `h` (with zero margin) between the robot and any pedestrian.
fn barrier_min(robot: (f64, f64), pedestrians: &[PedestrianState], r: f64) -> Option<f64> {
    pedestrians
        .iter()
        .map(|p| h_value(robot, p.position, r))
        .reduce(f64::min)
}

/// Runs one episode to its outcome.
pub fn run_episode(scenario: &Scenario, config: &EpisodeConfig) -> Result<EpisodeLog> {
    scenario.validate()?;
    config.pedestrian.validate()?;
    let params = &scenario.params;
    let dt = params.dt;
    let mut controller = Controller::new(&config.controller, dt, params.robot_goal, params.robot_radius)?;
    let r_collision = params.robot_radius + params.pedestrian_radius;
    let ped_params = OrcaAgentParams {
        radius: params.pedestrian_radius,
        ..config.pedestrian
    };
    let goals: Vec<(f64, f64)> = scenario.pedestrians.iter().map(|p| p.goal).collect();
    let mut pedestrians: Vec<PedestrianState> = scenario
        .pedestrians
        .iter()
        .map(|p| PedestrianState {
            position: p.start,
            velocity: (0.0, 0.0),
        })
        .collect();
    let mut robot = initial_robot_state(config.controller.model, scenario);
    let max_steps = (params.time_limit / dt).round() as usize;

    let mut records = Vec::new();
    let mut failure_count = 0;
    let mut solver_calls = 0;
    let mut total_solve_ms = 0.0;
    let mut step = 0;
    let outcome = loop {
        let t = step as f64 * dt;
        let position = robot.position();
        let h_min = barrier_min(position, &pedestrians, r_collision);
        let mut record = StepRecord {
            step,
            t,
            robot: robot.to_vec(),
            pedestrians: pedestrians
                .iter()
                .map(|p| [p.position.0, p.position.1, p.velocity.0, p.velocity.1])
                .collect(),
            decision: None,
            status: None,
            iterations: 0,
            h_min,
            slack: 0.0,
            solve_ms: 0.0,
            step_ms: 0.0,
        };
        let goal_distance = (position.0 - params.robot_goal.0).hypot(position.1 - params.robot_goal.1);
        let finished = if h_min.is_some_and(|h| h < 0.0) {
            Some(Outcome::Collision)
        } else if goal_distance <= config.goal_tolerance {
            Some(Outcome::Success)
        } else if step >= max_steps {
            Some(Outcome::Timeout)
        } else {
            None
        };
        if let Some(outcome) = finished {
            records.push(record);
            break outcome;
        }

        let step_start = Instant::now();
        let ped_velocities = pedestrian_velocities(&pedestrians, &goals, &ped_params, dt);
        let result = controller.control_step(&robot, &tracks(&pedestrians, params.pedestrian_radius));
        let solve_ms = match config.timing {
            Timing::Wall => result.solve_time_ms,
            Timing::None => 0.0,
        };
        if result.status.is_some() {
            solver_calls += 1;
            total_solve_ms += solve_ms;
        }
        if result.decision == ControlDecision::Brake {
            failure_count += 1;
        }
        robot = controller.advance(&robot, &result.decision);
        for (p, v) in pedestrians.iter_mut().zip(&ped_velocities) {
            p.position = (p.position.0 + v.0 * dt, p.position.1 + v.1 * dt);
            p.velocity = *v;
        }
        if config.timing == Timing::Wall {
            record.step_ms = step_start.elapsed().as_secs_f64() * 1e3;
        }
        record.decision = Some(result.decision);
        record.status = result.status;
        record.iterations = result.iterations;
        record.slack = result.slack_total;
        record.solve_ms = solve_ms;
        records.push(record);
        step += 1;
    };

    let navigation_time = step as f64 * dt;
    Ok(EpisodeLog {
        header: EpisodeHeader {
            schema: LOG_SCHEMA.to_string(),
            seed: scenario.seed,
            scenario_fingerprint: scenario.fingerprint(),
            scenario: scenario.clone(),
            config: config.clone(),
        },
        records,
        trailer: EpisodeTrailer {
            schema: LOG_SCHEMA.to_string(),
            outcome,
            navigation_time,
            failure_count,
            solver_calls,
            total_solve_ms,
        },
    })
}

/// Smallest zero-margin barrier value over the whole log; `+∞` when there
/// were no pedestrians.
pub fn min_clearance(log: &EpisodeLog) -> f64 {
    log.records
        .iter()
        .filter_map(|r| r.h_min)
        .fold(f64::INFINITY, f64::min)
}
