use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, Control, Interval, ModelKind, ObstacleTrack, RobotState, SystemModel};
use crate::error::{Error, Result};
use crate::ocp::{build, Formulation, OcpProblem, OcpSpec};
use crate::orca::{compute_velocity, preferred_velocity, select_neighbors, AgentState, OrcaAgentParams};
use crate::solver::{solve, NonlinearProgram, SolverConfig, SolverStatus};

/// Robot controllers compared by the benchmark, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Orca,
    MpcDc,
    MpcDcbf,
    ScmpcCbf,
    /// Soft CBF constraints plus the single-step generalized CBF row.
    Ours,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::Orca,
        ControllerKind::MpcDc,
        ControllerKind::MpcDcbf,
        ControllerKind::ScmpcCbf,
        ControllerKind::Ours,
    ];

    pub fn formulation(self) -> Option<Formulation> {
        match self {
            ControllerKind::Orca => None,
            ControllerKind::MpcDc => Some(Formulation::MpcDc),
            ControllerKind::MpcDcbf => Some(Formulation::MpcDcbf),
            ControllerKind::ScmpcCbf => Some(Formulation::ScmpcCbf),
            ControllerKind::Ours => Some(Formulation::ScmpcCbfGcbf),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Orca => "ORCA",
            ControllerKind::MpcDc => "MPC-DC",
            ControllerKind::MpcDcbf => "MPC-D-CBF",
            ControllerKind::ScmpcCbf => "SCMPC-CBF",
            ControllerKind::Ours => "Ours",
        }
    }

    /// Command-line spelling.
    pub fn key(self) -> &'static str {
        match self {
            ControllerKind::Orca => "orca",
            ControllerKind::MpcDc => "mpc-dc",
            ControllerKind::MpcDcbf => "mpc-dcbf",
            ControllerKind::ScmpcCbf => "scmpc-cbf",
            ControllerKind::Ours => "ours",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller '{s}'")))
    }

    /// Whether the controller solves an optimization problem every step.
    pub fn is_optimizing(self) -> bool {
        self.formulation().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub model: ModelKind,
    pub horizon: usize,
    pub gamma: f64,
    pub eta: f64,
    /// Exact-penalty weight for the soft formulations.
    pub alpha: f64,
    /// Safety margin ε; `None` uses the formulation's default.
    pub margin: Option<f64>,
    pub solver: SolverConfig,
    /// Parameters of the robot when driven by the ORCA baseline.
    pub orca: OrcaAgentParams,
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind, model: ModelKind) -> Self {
        ControllerConfig {
            kind,
            model,
            horizon: 8,
            gamma: 0.1,
            eta: 0.3,
            alpha: 10.0,
            margin: None,
            solver: SolverConfig::default(),
            orca: OrcaAgentParams::default(),
        }
    }

    /// Optimal-control problem template for the configured formulation.
    pub fn ocp_spec(&self, model: &SystemModel, goal: (f64, f64), robot_radius: f64) -> Option<OcpSpec> {
        let formulation = self.kind.formulation()?;
        let mut spec = OcpSpec::new(model, formulation, goal);
        spec.horizon = self.horizon;
        spec.barrier.gamma = self.gamma;
        spec.barrier.eta = self.eta;
        spec.barrier.robot_radius = robot_radius;
        if let Some(m) = self.margin {
            spec.barrier.margin = m;
        }
        spec.penalty_weight = self.alpha;
        Some(spec)
    }
}

/// What the robot does this step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlDecision {
    /// First control of the optimized sequence.
    Applied { u: Control },
    /// Velocity command of the holonomic baseline, integrated kinematically.
    Velocity { vx: f64, vy: f64 },
    Brake,
}

/// A control decision with its solver bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub decision: ControlDecision,
    /// `None` when no solver was called.
    pub status: Option<SolverStatus>,
    pub iterations: usize,
    pub slack_total: f64,
    pub solve_time_ms: f64,
}

/// Receding-horizon controller with warm starting across steps.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    model: SystemModel,
    spec: Option<OcpSpec>,
    goal: (f64, f64),
    robot_radius: f64,
    previous: Option<Vec<Control>>,
}

impl Controller {
    pub fn new(config: &ControllerConfig, dt: f64, goal: (f64, f64), robot_radius: f64) -> Result<Self> {
        let model = SystemModel::for_kind(config.model, dt);
        model.validate()?;
        let spec = config.ocp_spec(&model, goal, robot_radius);
        match &spec {
            Some(s) => s.validate(&model)?,
            None => {
                if config.model != ModelKind::DoubleIntegrator {
                    return Err(Error::Config(
                        "the ORCA baseline drives a holonomic robot; use the double-integrator model".into(),
                    ));
                }
                config.orca.validate()?;
            }
        }
        Ok(Controller {
            config: config.clone(),
            model,
            spec,
            goal,
            robot_radius,
            previous: None,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Chooses the robot action at `x` given the pedestrians' current tracks.
    /// Solver failures map to [`ControlDecision::Brake`].
    pub fn control_step(&mut self, x: &RobotState, tracks: &[ObstacleTrack]) -> StepResult {
        match self.spec.clone() {
            Some(spec) => self.mpc_step(&spec, x, tracks),
            None => self.orca_step(x, tracks),
        }
    }

    fn mpc_step(&mut self, spec: &OcpSpec, x: &RobotState, tracks: &[ObstacleTrack]) -> StepResult {
        let start = Instant::now();
        let problem = match build(spec, &self.model, x, tracks) {
            Ok(p) => self.seed_turn(x, p.with_warm_start(self.previous.as_deref())),
            Err(_) => {
                self.previous = None;
                return StepResult {
                    decision: ControlDecision::Brake,
                    status: None,
                    iterations: 0,
                    slack_total: 0.0,
                    solve_time_ms: 0.0,
                };
            }
        };
        let result = solve(&problem, &self.config.solver);
        let solve_time_ms = start.elapsed().as_secs_f64() * 1e3;
        let (decision, slack_total) = if result.status == SolverStatus::Solved {
            let controls = problem.controls(&result.solution);
            let u = Control::from_slice(self.model.kind, &self.model.clamp_input(&controls[0].to_vec()));
            let slack = problem.slacks(&result.solution).sum();
            self.previous = Some(controls);
            (ControlDecision::Applied { u }, slack)
        } else {
            self.previous = None;
            (ControlDecision::Brake, 0.0)
        };
        StepResult {
            decision,
            status: Some(result.status),
            iterations: result.iterations,
            slack_total,
            solve_time_ms,
        }
    }

    /// Zero forward speed is a stationary point of the unicycle tracking cost
    /// at any heading, so a guess without forward motion is given turning
    /// rates that face the goal.
    fn seed_turn(&self, x: &RobotState, problem: OcpProblem) -> OcpProblem {
        let RobotState::Unicycle { x: px, y: py, theta } = *x else {
            return problem;
        };
        let mut z = problem.initial_guess();
        let horizon = problem.horizon();
        if (0..horizon).any(|k| z[2 * k] != 0.0) {
            return problem;
        }
        let dt = self.model.dt;
        let bound = self.model.input_bounds[1];
        let mut error = wrap_angle((self.goal.1 - py).atan2(self.goal.0 - px) - theta);
        for k in 0..horizon {
            let omega = (error / dt).clamp(bound.lo, bound.hi);
            z[2 * k + 1] = omega;
            error -= omega * dt;
        }
        problem.with_initial_guess(z).expect("guess keeps its length")
    }

    fn orca_step(&mut self, x: &RobotState, tracks: &[ObstacleTrack]) -> StepResult {
        let params = &self.config.orca;
        let me = AgentState {
            position: x.position(),
            velocity: x.velocity(),
            radius: self.robot_radius,
        };
        let others: Vec<AgentState> = tracks
            .iter()
            .map(|t| AgentState {
                position: (t.px, t.py),
                velocity: (t.vx, t.vy),
                radius: t.radius,
            })
            .collect();
        let all = OrcaAgentParams {
            neighbor_distance: f64::INFINITY,
            max_neighbors: others.len().max(1),
            ..*params
        };
        let neighbors: Vec<AgentState> = select_neighbors(&me, &others, &all).into_iter().map(|i| others[i]).collect();
        let pref = preferred_velocity(me.position, self.goal, params.preferred_speed, self.model.dt);
        let (vx, vy) = compute_velocity(&me, &neighbors, params, pref, self.model.dt);
        StepResult {
            decision: ControlDecision::Velocity { vx, vy },
            status: None,
            iterations: 0,
            slack_total: 0.0,
            solve_time_ms: 0.0,
        }
    }

    /// Next robot state under `decision`.
    pub fn advance(&self, x: &RobotState, decision: &ControlDecision) -> RobotState {
        match decision {
            ControlDecision::Applied { u } => RobotState::from_slice(self.model.kind, &self.model.step_raw(&x.to_vec(), &u.to_vec()))
                .expect("model step preserves the state dimension"),
            ControlDecision::Velocity { vx, vy } => {
                let (px, py) = x.position();
                let dt = self.model.dt;
                RobotState::DoubleIntegrator {
                    x: px + vx * dt,
                    y: py + vy * dt,
                    vx: *vx,
                    vy: *vy,
                }
            }
            ControlDecision::Brake => apply_brake(&self.model, x),
        }
    }
}

/// Braking step. The double integrator decelerates at the input limit on
/// each axis without reversing; the unicycle stops in place.
pub fn apply_brake(model: &SystemModel, x: &RobotState) -> RobotState {
    match *x {
        RobotState::DoubleIntegrator { vx, vy, .. } => {
            let dt = model.dt;
            // (acceleration, velocity after the step) on one axis
            let axis = |v: f64, bound: &Interval| -> (f64, f64) {
                let limit = bound.hi.min(-bound.lo);
                if v.abs() <= limit * dt {
                    (-v / dt, 0.0)
                } else {
                    let a = -v.signum() * limit;
                    (a, v + a * dt)
                }
            };
            let (ax, vx_next) = axis(vx, &model.input_bounds[0]);
            let (ay, vy_next) = axis(vy, &model.input_bounds[1]);
            let next = model.step_raw(&x.to_vec(), &[ax, ay]);
            RobotState::DoubleIntegrator {
                x: next[0],
                y: next[1],
                vx: vx_next,
                vy: vy_next,
            }
        }
        RobotState::Unicycle { .. } => *x,
    }
}
