//! Discrete-time robot models and constant-velocity obstacle prediction.
//!
//! Both models are discretized with forward Euler by default. Under Euler the
//! double integrator's position lags the acceleration by one step, so a
//! position barrier has relative degree 2; zero-order hold is available for the
//! double integrator and collapses that to 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a control lies inside the input box.
const BOUND_TOL: f64 = 1e-6;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "di")]
    DoubleIntegrator,
    Unicycle,
}

impl ModelKind {
    /// Short command-line spelling.
    pub fn key(self) -> &'static str {
        match self {
            ModelKind::DoubleIntegrator => "di",
            ModelKind::Unicycle => "unicycle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "di" | "double_integrator" | "double-integrator" => Ok(ModelKind::DoubleIntegrator),
            "unicycle" => Ok(ModelKind::Unicycle),
            _ => Err(Error::Config(format!("unknown model '{s}' (expected di or unicycle)"))),
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            ModelKind::DoubleIntegrator => 4,
            ModelKind::Unicycle => 3,
        }
    }

    pub fn input_dim(self) -> usize {
        2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    Euler,
    /// Exact discretization of the double integrator under piecewise-constant
    /// acceleration. The unicycle always uses Euler.
    ZeroOrderHold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Interval::new(-half_width, half_width)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobotState {
    DoubleIntegrator { x: f64, y: f64, vx: f64, vy: f64 },
    Unicycle { x: f64, y: f64, theta: f64 },
}

impl RobotState {
    pub fn kind(&self) -> ModelKind {
        match self {
            RobotState::DoubleIntegrator { .. } => ModelKind::DoubleIntegrator,
            RobotState::Unicycle { .. } => ModelKind::Unicycle,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        match *self {
            RobotState::DoubleIntegrator { x, y, .. } | RobotState::Unicycle { x, y, .. } => {
                (x, y)
            }
        }
    }

    /// Planar velocity. For the unicycle this is unknown from the pose alone and
    /// reported as zero.
    pub fn velocity(&self) -> (f64, f64) {
        match *self {
            RobotState::DoubleIntegrator { vx, vy, .. } => (vx, vy),
            RobotState::Unicycle { .. } => (0.0, 0.0),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            RobotState::DoubleIntegrator { x, y, vx, vy } => vec![x, y, vx, vy],
            RobotState::Unicycle { x, y, theta } => vec![x, y, theta],
        }
    }

    pub fn from_slice(kind: ModelKind, v: &[f64]) -> Result<Self> {
        if v.len() != kind.state_dim() {
            return Err(Error::Config(format!(
                "state vector of length {} does not match {kind:?}",
                v.len()
            )));
        }
        Ok(match kind {
            ModelKind::DoubleIntegrator => RobotState::DoubleIntegrator {
                x: v[0],
                y: v[1],
                vx: v[2],
                vy: v[3],
            },
            ModelKind::Unicycle => RobotState::Unicycle {
                x: v[0],
                y: v[1],
                theta: wrap_angle(v[2]),
            },
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Control {
    Accel { ax: f64, ay: f64 },
    VelOmega { v: f64, omega: f64 },
}

impl Control {
    pub fn kind(&self) -> ModelKind {
        match self {
            Control::Accel { .. } => ModelKind::DoubleIntegrator,
            Control::VelOmega { .. } => ModelKind::Unicycle,
        }
    }

    pub fn zero(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DoubleIntegrator => Control::Accel { ax: 0.0, ay: 0.0 },
            ModelKind::Unicycle => Control::VelOmega { v: 0.0, omega: 0.0 },
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            Control::Accel { ax, ay } => vec![ax, ay],
            Control::VelOmega { v, omega } => vec![v, omega],
        }
    }

    pub fn from_slice(kind: ModelKind, u: &[f64]) -> Self {
        match kind {
            ModelKind::DoubleIntegrator => Control::Accel { ax: u[0], ay: u[1] },
            ModelKind::Unicycle => Control::VelOmega {
                v: u[0],
                omega: u[1],
            },
        }
    }
}

/// A discrete-time robot model `x_{k+1} = f(x_k, u_k)` with its state and input
/// boxes and the relative degree of a position barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub kind: ModelKind,
    pub dt: f64,
    pub discretization: Discretization,
    pub state_bounds: Vec<Interval>,
    pub input_bounds: Vec<Interval>,
    pub relative_degree: usize,
}

impl SystemModel {
    /// Planar double integrator, `|a| ≤ 1.5` and `|v| ≤ 1` per axis, positions
    /// inside the 10 m box centred at the origin.
    pub fn double_integrator(dt: f64) -> Self {
        SystemModel {
            kind: ModelKind::DoubleIntegrator,
            dt,
            discretization: Discretization::Euler,
            state_bounds: vec![
                Interval::symmetric(5.0),
                Interval::symmetric(5.0),
                Interval::symmetric(1.0),
                Interval::symmetric(1.0),
            ],
            input_bounds: vec![Interval::symmetric(1.5), Interval::symmetric(1.5)],
            relative_degree: 2,
        }
    }

    /// Unicycle with `v ∈ [0, 1]` and `ω ∈ [-1, 1]`.
    pub fn unicycle(dt: f64) -> Self {
        SystemModel {
            kind: ModelKind::Unicycle,
            dt,
            discretization: Discretization::Euler,
            state_bounds: vec![
                Interval::symmetric(5.0),
                Interval::symmetric(5.0),
                Interval::UNBOUNDED,
            ],
            input_bounds: vec![Interval::new(0.0, 1.0), Interval::symmetric(1.0)],
            relative_degree: 1,
        }
    }

    pub fn for_kind(kind: ModelKind, dt: f64) -> Self {
        match kind {
            ModelKind::DoubleIntegrator => Self::double_integrator(dt),
            ModelKind::Unicycle => Self::unicycle(dt),
        }
    }

    /// Switches the double integrator to zero-order hold. The relative degree
    /// of a position barrier drops to 1.
    pub fn with_zero_order_hold(mut self) -> Self {
        if self.kind == ModelKind::DoubleIntegrator {
            self.discretization = Discretization::ZeroOrderHold;
            self.relative_degree = 1;
        }
        self
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.kind.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.state_bounds.len() != self.state_dim() || self.input_bounds.len() != self.input_dim()
        {
            return Err(Error::Config("bound vectors do not match model dimensions".into()));
        }
        for b in self.state_bounds.iter().chain(&self.input_bounds) {
            if b.lo > b.hi || b.lo.is_nan() || b.hi.is_nan() {
                return Err(Error::Config(format!("empty interval [{}, {}]", b.lo, b.hi)));
            }
        }
        if self.relative_degree == 0 {
            return Err(Error::Config("relative degree must be positive".into()));
        }
        Ok(())
    }

    /// Componentwise clamp of a raw input vector onto the input box.
    pub fn clamp_input(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.input_bounds)
            .map(|(v, b)| b.clamp(*v))
            .collect()
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &RobotState, u: &Control) -> Result<RobotState> {
        if x.kind() != self.kind || u.kind() != self.kind {
            return Err(Error::Config(format!(
                "state {:?} / control {:?} do not match model {:?}",
                x.kind(),
                u.kind(),
                self.kind
            )));
        }
        let uv = u.to_vec();
        for (i, (v, b)) in uv.iter().zip(&self.input_bounds).enumerate() {
            if !v.is_finite() || !b.contains(*v, BOUND_TOL) {
                return Err(Error::Precondition(format!(
                    "input component {i} = {v} outside [{}, {}]",
                    b.lo, b.hi
                )));
            }
        }
        RobotState::from_slice(self.kind, &self.step_raw(&x.to_vec(), &uv))
    }

    /// Raw vector form of [`SystemModel::step`] without precondition checks.
    pub fn step_raw(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let dt = self.dt;
        match self.kind {
            ModelKind::DoubleIntegrator => {
                let (px, py, vx, vy) = (x[0], x[1], x[2], x[3]);
                match self.discretization {
                    Discretization::Euler => vec![
                        px + vx * dt,
                        py + vy * dt,
                        vx + u[0] * dt,
                        vy + u[1] * dt,
                    ],
                    Discretization::ZeroOrderHold => vec![
                        px + vx * dt + 0.5 * u[0] * dt * dt,
                        py + vy * dt + 0.5 * u[1] * dt * dt,
                        vx + u[0] * dt,
                        vy + u[1] * dt,
                    ],
                }
            }
            ModelKind::Unicycle => {
                let (px, py, th) = (x[0], x[1], x[2]);
                vec![
                    px + u[0] * th.cos() * dt,
                    py + u[0] * th.sin() * dt,
                    wrap_angle(th + u[1] * dt),
                ]
            }
        }
    }

    /// Jacobians `(∂f/∂x, ∂f/∂u)` at `(x, u)`, both row-major.
    pub fn step_jacobians(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dt = self.dt;
        match self.kind {
            ModelKind::DoubleIntegrator => {
                #[rustfmt::skip]
                let a = vec![
                    1.0, 0.0, dt, 0.0,
                    0.0, 1.0, 0.0, dt,
                    0.0, 0.0, 1.0, 0.0,
                    0.0, 0.0, 0.0, 1.0,
                ];
                let h = match self.discretization {
                    Discretization::Euler => 0.0,
                    Discretization::ZeroOrderHold => 0.5 * dt * dt,
                };
                #[rustfmt::skip]
                let b = vec![
                    h, 0.0,
                    0.0, h,
                    dt, 0.0,
                    0.0, dt,
                ];
                (a, b)
            }
            ModelKind::Unicycle => {
                let (s, c) = x[2].sin_cos();
                let v = u[0];
                #[rustfmt::skip]
                let a = vec![
                    1.0, 0.0, -v * s * dt,
                    0.0, 1.0, v * c * dt,
                    0.0, 0.0, 1.0,
                ];
                #[rustfmt::skip]
                let b = vec![
                    c * dt, 0.0,
                    s * dt, 0.0,
                    0.0, dt,
                ];
                (a, b)
            }
        }
    }

    /// Forward simulation of a control sequence, returning `x_1..x_N`.
    pub fn rollout(&self, x0: &RobotState, controls: &[Control]) -> Result<Vec<RobotState>> {
        if controls.is_empty() {
            return Err(Error::Precondition("rollout needs at least one control".into()));
        }
        let mut out = Vec::with_capacity(controls.len());
        let mut x = *x0;
        for u in controls {
            x = self.step(&x, u)?;
            out.push(x);
        }
        Ok(out)
    }

    /// Sensitivity of every rolled-out state with respect to every control.
    pub fn rollout_jacobian(&self, x0: &RobotState, controls: &[Control]) -> Result<RolloutJacobian> {
        // Run the checked rollout first so variant and bound errors surface.
        self.rollout(x0, controls)?;
        let flat: Vec<f64> = controls.iter().flat_map(|u| u.to_vec()).collect();
        let traj = self.rollout_raw(&x0.to_vec(), &flat);
        Ok(RolloutJacobian {
            horizon: controls.len(),
            state_dim: self.state_dim(),
            input_dim: self.input_dim(),
            data: traj.sensitivity,
        })
    }

    /// Unchecked rollout of a flat control vector with forward sensitivities.
    pub fn rollout_raw(&self, x0: &[f64], controls: &[f64]) -> Trajectory {
        let n = self.state_dim();
        let m = self.input_dim();
        let horizon = controls.len() / m;
        let cols = horizon * m;
        let mut states = Vec::with_capacity((horizon + 1) * n);
        states.extend_from_slice(x0);
        // sensitivity rows for x_{k+1}, k = 0..N-1; x_0 has none
        let mut sens = vec![0.0; horizon * n * cols];
        for k in 0..horizon {
            let x = states[k * n..(k + 1) * n].to_vec();
            let u = &controls[k * m..(k + 1) * m];
            let (a, b) = self.step_jacobians(&x, u);
            let next = self.step_raw(&x, u);
            states.extend_from_slice(&next);
            // S_{k+1} = A_k S_k + [.. B_k at block k ..]
            if k > 0 {
                let (prev, cur) = sens.split_at_mut(k * n * cols);
                let prev = &prev[(k - 1) * n * cols..];
                let cur = &mut cur[..n * cols];
                for r in 0..n {
                    for c in 0..k * m {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += a[r * n + j] * prev[j * cols + c];
                        }
                        cur[r * cols + c] = acc;
                    }
                }
            }
            let cur = &mut sens[k * n * cols..(k + 1) * n * cols];
            for r in 0..n {
                for j in 0..m {
                    cur[r * cols + k * m + j] = b[r * m + j];
                }
            }
        }
        Trajectory {
            state_dim: n,
            horizon,
            states,
            sensitivity: sens,
        }
    }
}

/// Result of [`SystemModel::rollout_raw`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state_dim: usize,
    pub horizon: usize,
    /// `x_0..x_N`, flattened.
    pub states: Vec<f64>,
    /// `∂x_{k+1}/∂u`, row-major `(N·n) × (N·m)`.
    pub sensitivity: Vec<f64>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    /// Sensitivity rows of `x_k` (k ≥ 1). Each row has `N·m` entries.
    pub fn state_sensitivity(&self, k: usize) -> &[f64] {
        debug_assert!(k >= 1);
        let cols = self.sensitivity.len() / (self.horizon * self.state_dim).max(1);
        let n = self.state_dim;
        &self.sensitivity[(k - 1) * n * cols..k * n * cols]
    }
}

/// Dense block lower-triangular Jacobian of `x_1..x_N` with respect to
/// `u_0..u_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutJacobian {
    pub horizon: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub data: Vec<f64>,
}

impl RolloutJacobian {
    /// `∂ x_{k}[i] / ∂ u_{j}[l]` for `k ∈ 1..=N`.
    pub fn get(&self, k: usize, i: usize, j: usize, l: usize) -> f64 {
        let cols = self.horizon * self.input_dim;
        let row = (k - 1) * self.state_dim + i;
        self.data[row * cols + j * self.input_dim + l]
    }
}

/// A circular moving obstacle under the constant-velocity motion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleTrack {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub radius: f64,
}

impl ObstacleTrack {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64, radius: f64) -> Self {
        ObstacleTrack {
            px,
            py,
            vx,
            vy,
            radius,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.radius > 0.0
            && [self.px, self.py, self.vx, self.vy, self.radius]
                .iter()
                .all(|v| v.is_finite())
    }
}

/// Extrapolates an obstacle `k` steps ahead at constant velocity.
pub fn predict_obstacle(o: &ObstacleTrack, k: usize, dt: f64) -> ObstacleTrack {
    let tau = k as f64 * dt;
    ObstacleTrack {
        px: o.px + o.vx * tau,
        py: o.py + o.vy * tau,
        ..*o
    }
}
