//! Receding-horizon obstacle-avoidance problems transcribed by single
//! shooting: the decision vector holds the control sequence (and, for the soft
//! formulations, one slack per step and obstacle); states are eliminated by
//! rolling the dynamics forward.

use serde::{Deserialize, Serialize};

use crate::barrier::{combined_radius, gcbf_decay, h_gradient, h_value, BarrierSpec};
use crate::dynamics::{
    predict_obstacle, Control, ModelKind, ObstacleTrack, RobotState, SystemModel, Trajectory,
};
use crate::error::{Error, Result};
use crate::solver::{Evaluation, NonlinearProgram, RowLabel};

/// Curvature assigned to slack variables in the Hessian model. The slack cost
/// is linear, so this only shapes the QP steps, not the solution.
const SLACK_CURVATURE: f64 = 1.0;

/// Relative step of the central differences used for second-order terms.
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Distance constraints on every predicted state.
    MpcDc,
    /// Hard discrete-time CBF constraints.
    MpcDcbf,
    /// CBF constraints softened by slacks with an exact L1 penalty.
    ScmpcCbf,
    /// Soft CBF constraints plus one hard generalized CBF row per obstacle.
    ScmpcCbfGcbf,
}

impl Formulation {
    pub const ALL: [Formulation; 4] = [
        Formulation::MpcDc,
        Formulation::MpcDcbf,
        Formulation::ScmpcCbf,
        Formulation::ScmpcCbfGcbf,
    ];

    pub fn uses_slacks(self) -> bool {
        matches!(self, Formulation::ScmpcCbf | Formulation::ScmpcCbfGcbf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Formulation::MpcDc => "MPC-DC",
            Formulation::MpcDcbf => "MPC-DCBF",
            Formulation::ScmpcCbf => "SCMPC-CBF",
            Formulation::ScmpcCbfGcbf => "SCMPC-CBF+DGCBF",
        }
    }

    /// Safety margin ε conventionally used with the formulation.
    pub fn default_margin(self) -> f64 {
        match self {
            Formulation::MpcDc => 0.2,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlackNorm {
    #[default]
    L1,
}

/// Diagonal quadratic tracking weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub terminal: Vec<f64>,
}

impl CostWeights {
    /// Position weights 1, all other state weights 0, `R = 0.1 I`, `Q_f = 10 Q`.
    pub fn for_model(kind: ModelKind) -> Self {
        let mut state = vec![0.0; kind.state_dim()];
        state[0] = 1.0;
        state[1] = 1.0;
        CostWeights {
            terminal: state.iter().map(|w| 10.0 * w).collect(),
            state,
            input: vec![0.1; kind.input_dim()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSpec {
    pub horizon: usize,
    pub weights: CostWeights,
    pub goal: (f64, f64),
    pub formulation: Formulation,
    pub barrier: BarrierSpec,
    pub penalty_weight: f64,
    pub slack_norm: SlackNorm,
}

impl OcpSpec {
    /// Defaults for `model`: horizon 8, tracking weights from
    /// [`CostWeights::for_model`], the formulation's margin and the model's
    /// relative degree.
    pub fn new(model: &SystemModel, formulation: Formulation, goal: (f64, f64)) -> Self {
        OcpSpec {
            horizon: 8,
            weights: CostWeights::for_model(model.kind),
            goal,
            formulation,
            barrier: BarrierSpec {
                margin: formulation.default_margin(),
                relative_degree: model.relative_degree,
                ..BarrierSpec::default()
            },
            penalty_weight: 1.0,
            slack_norm: SlackNorm::L1,
        }
    }

    pub fn validate(&self, model: &SystemModel) -> Result<()> {
        self.barrier.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let (n, m) = (model.state_dim(), model.input_dim());
        let w = &self.weights;
        if w.state.len() != n || w.terminal.len() != n || w.input.len() != m {
            return Err(Error::Config(format!(
                "cost weights need {n} state and {m} input entries"
            )));
        }
        if w.state.iter().chain(&w.terminal).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("state weights must be finite and non-negative".into()));
        }
        if w.input.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("input weights must be finite and positive".into()));
        }
        if !self.goal.0.is_finite() || !self.goal.1.is_finite() {
            return Err(Error::Config("goal must be finite".into()));
        }
        if self.formulation.uses_slacks() && !(self.penalty_weight > 0.0) {
            return Err(Error::Config(format!(
                "{} needs a positive penalty weight, got {}",
                self.formulation.name(),
                self.penalty_weight
            )));
        }
        if self.formulation == Formulation::ScmpcCbfGcbf {
            let d = self.barrier.relative_degree;
            if d != model.relative_degree {
                return Err(Error::Config(format!(
                    "barrier relative degree {d} differs from the model's {}",
                    model.relative_degree
                )));
            }
            if self.horizon < d {
                return Err(Error::Config(format!(
                    "horizon {} is shorter than the relative degree {d}",
                    self.horizon
                )));
            }
        }
        Ok(())
    }
}

/// Slack values indexed by horizon step and obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackVector {
    pub horizon: usize,
    pub n_obstacles: usize,
    /// Step-major: entry `k * n_obstacles + i`.
    pub values: Vec<f64>,
}

impl SlackVector {
    pub fn empty() -> Self {
        SlackVector {
            horizon: 0,
            n_obstacles: 0,
            values: Vec::new(),
        }
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.n_obstacles + i]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(*v))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Shifted warm start: `[u_1..u_{N-1}, u_{N-1}]` from a previous solution, or
/// zeros. Slack entries are always zero.
pub fn initial_guess(
    spec: &OcpSpec,
    model: &SystemModel,
    n_obstacles: usize,
    previous: Option<&[Control]>,
) -> Vec<f64> {
    let n = spec.horizon;
    let m = model.input_dim();
    let slacks = if spec.formulation.uses_slacks() {
        n * n_obstacles
    } else {
        0
    };
    let mut z = vec![0.0; n * m + slacks];
    if let Some(prev) = previous.filter(|p| !p.is_empty()) {
        for k in 0..n {
            let u = prev[(k + 1).min(prev.len() - 1)].to_vec();
            if u.len() == m {
                z[k * m..(k + 1) * m].copy_from_slice(&model.clamp_input(&u));
            }
        }
    }
    z
}

/// A transcribed problem ready for [`crate::solver::solve`].
#[derive(Debug, Clone)]
pub struct OcpProblem {
    model: SystemModel,
    spec: OcpSpec,
    x0: Vec<f64>,
    goal_state: Vec<f64>,
    /// Predicted obstacle centers, `[k][i]` for `k = 0..=N`.
    centers: Vec<Vec<(f64, f64)>>,
    radii: Vec<f64>,
    labels: Vec<RowLabel>,
    guess: Vec<f64>,
}

pub fn build_mpc_dc(
    spec: &OcpSpec,
    model: &SystemModel,
    x0: &RobotState,
    obstacles: &[ObstacleTrack],
) -> Result<OcpProblem> {
    expect_formulation(spec, Formulation::MpcDc)?;
    build(spec, model, x0, obstacles)
}

pub fn build_mpc_dcbf(
    spec: &OcpSpec,
    model: &SystemModel,
    x0: &RobotState,
    obstacles: &[ObstacleTrack],
) -> Result<OcpProblem> {
    expect_formulation(spec, Formulation::MpcDcbf)?;
    build(spec, model, x0, obstacles)
}

pub fn build_scmpc_cbf(
    spec: &OcpSpec,
    model: &SystemModel,
    x0: &RobotState,
    obstacles: &[ObstacleTrack],
) -> Result<OcpProblem> {
    expect_formulation(spec, Formulation::ScmpcCbf)?;
    build(spec, model, x0, obstacles)
}

pub fn build_scmpc_cbf_gcbf(
    spec: &OcpSpec,
    model: &SystemModel,
    x0: &RobotState,
    obstacles: &[ObstacleTrack],
) -> Result<OcpProblem> {
    expect_formulation(spec, Formulation::ScmpcCbfGcbf)?;
    build(spec, model, x0, obstacles)
}

fn expect_formulation(spec: &OcpSpec, f: Formulation) -> Result<()> {
    if spec.formulation != f {
        return Err(Error::Config(format!(
            "builder for {} called with formulation {}",
            f.name(),
            spec.formulation.name()
        )));
    }
    Ok(())
}

/// Builds the problem for whichever formulation `spec` names.
pub fn build(
    spec: &OcpSpec,
    model: &SystemModel,
    x0: &RobotState,
    obstacles: &[ObstacleTrack],
) -> Result<OcpProblem> {
    model.validate()?;
    spec.validate(model)?;
    if x0.kind() != model.kind {
        return Err(Error::Config(format!(
            "state {:?} does not match model {:?}",
            x0.kind(),
            model.kind
        )));
    }
    if !x0.is_finite() {
        return Err(Error::Precondition("initial state is not finite".into()));
    }
    if let Some(o) = obstacles.iter().find(|o| !o.is_valid()) {
        return Err(Error::Precondition(format!("invalid obstacle track {o:?}")));
    }

    let n = spec.horizon;
    let m = model.input_dim();
    let no = obstacles.len();
    let centers = (0..=n)
        .map(|k| {
            obstacles
                .iter()
                .map(|o| {
                    let p = predict_obstacle(o, k, model.dt);
                    (p.px, p.py)
                })
                .collect()
        })
        .collect();
    let radii = obstacles
        .iter()
        .map(|o| combined_radius(&spec.barrier, o.radius))
        .collect();

    let mut labels = Vec::new();
    for step in 0..n {
        for (component, b) in model.input_bounds.iter().enumerate() {
            if b.lo.is_finite() {
                labels.push(RowLabel::InputBound { step, component, upper: false });
            }
            if b.hi.is_finite() {
                labels.push(RowLabel::InputBound { step, component, upper: true });
            }
        }
    }
    for step in 1..=n {
        for (component, b) in model.state_bounds.iter().enumerate() {
            if b.lo.is_finite() {
                labels.push(RowLabel::StateBound { step, component, upper: false });
            }
            if b.hi.is_finite() {
                labels.push(RowLabel::StateBound { step, component, upper: true });
            }
        }
    }
    for k in 0..n {
        for i in 0..no {
            labels.push(match spec.formulation {
                Formulation::MpcDc => RowLabel::Distance { k, i },
                Formulation::MpcDcbf => RowLabel::Dcbf { k, i },
                Formulation::ScmpcCbf | Formulation::ScmpcCbfGcbf => RowLabel::SoftCbf { k, i },
            });
        }
    }
    if spec.formulation.uses_slacks() {
        for k in 0..n {
            for i in 0..no {
                labels.push(RowLabel::SlackNonneg { k, i });
            }
        }
    }
    if spec.formulation == Formulation::ScmpcCbfGcbf {
        labels.extend((0..no).map(|i| RowLabel::Gcbf { i }));
    }

    let mut goal_state = vec![0.0; model.state_dim()];
    goal_state[0] = spec.goal.0;
    goal_state[1] = spec.goal.1;
    let guess = initial_guess(spec, model, no, None);
    debug_assert_eq!(guess.len(), n * m + if spec.formulation.uses_slacks() { n * no } else { 0 });

    Ok(OcpProblem {
        model: model.clone(),
        spec: spec.clone(),
        x0: x0.to_vec(),
        goal_state,
        centers,
        radii,
        labels,
        guess,
    })
}

impl OcpProblem {
    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn n_obstacles(&self) -> usize {
        self.radii.len()
    }

    pub fn n_controls(&self) -> usize {
        self.spec.horizon * self.model.input_dim()
    }

    pub fn n_slacks(&self) -> usize {
        if self.spec.formulation.uses_slacks() {
            self.spec.horizon * self.n_obstacles()
        } else {
            0
        }
    }

    /// Replaces the initial guess with the shifted previous solution.
    pub fn with_warm_start(mut self, previous: Option<&[Control]>) -> Self {
        self.guess = initial_guess(&self.spec, &self.model, self.n_obstacles(), previous);
        self
    }

    /// Replaces the initial guess with an explicit decision vector.
    pub fn with_initial_guess(mut self, z: Vec<f64>) -> Result<Self> {
        if z.len() != self.n_vars() {
            return Err(Error::Precondition(format!(
                "initial guess has {} entries, expected {}",
                z.len(),
                self.n_vars()
            )));
        }
        self.guess = z;
        Ok(self)
    }

    pub fn controls(&self, z: &[f64]) -> Vec<Control> {
        let m = self.model.input_dim();
        z[..self.n_controls()]
            .chunks_exact(m)
            .map(|u| Control::from_slice(self.model.kind, u))
            .collect()
    }

    pub fn slacks(&self, z: &[f64]) -> SlackVector {
        if !self.spec.formulation.uses_slacks() {
            return SlackVector::empty();
        }
        SlackVector {
            horizon: self.spec.horizon,
            n_obstacles: self.n_obstacles(),
            values: z[self.n_controls()..].to_vec(),
        }
    }

    /// Predicted states `x_0..x_N` for decision vector `z`, flattened.
    pub fn predicted_states(&self, z: &[f64]) -> Vec<f64> {
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        let mut states = Vec::with_capacity((self.spec.horizon + 1) * n);
        states.extend_from_slice(&self.x0);
        for k in 0..self.spec.horizon {
            let next = self
                .model
                .step_raw(&states[k * n..(k + 1) * n], &z[k * m..(k + 1) * m]);
            states.extend_from_slice(&next);
        }
        states
    }

    /// Predicted obstacle center `i` at step `k`.
    pub fn obstacle_center(&self, k: usize, i: usize) -> (f64, f64) {
        self.centers[k][i]
    }

    pub fn combined_radius(&self, i: usize) -> f64 {
        self.radii[i]
    }

    /// Barrier values `h_i(x_k, o_k)` for `k = 0..=N`, step-major.
    pub fn barrier_values(&self, z: &[f64]) -> Vec<f64> {
        let states = self.predicted_states(z);
        let n = self.model.state_dim();
        let mut out = Vec::with_capacity((self.spec.horizon + 1) * self.n_obstacles());
        for k in 0..=self.spec.horizon {
            let p = (states[k * n], states[k * n + 1]);
            for i in 0..self.n_obstacles() {
                out.push(h_value(p, self.centers[k][i], self.radii[i]));
            }
        }
        out
    }

    fn tracking_error(&self, x: &[f64]) -> Vec<f64> {
        let mut e: Vec<f64> = x.iter().zip(&self.goal_state).map(|(a, b)| a - b).collect();
        if self.model.kind == ModelKind::Unicycle {
            e[2] = crate::dynamics::wrap_angle(e[2]);
        }
        e
    }

    fn cost_only(&self, z: &[f64], states: &[f64]) -> f64 {
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        let w = &self.spec.weights;
        let big_n = self.spec.horizon;
        let mut cost = 0.0;
        for k in 0..=big_n {
            let e = self.tracking_error(&states[k * n..(k + 1) * n]);
            let q = if k == big_n { &w.terminal } else { &w.state };
            cost += e.iter().zip(q).map(|(e, q)| q * e * e).sum::<f64>();
        }
        for u in z[..big_n * m].chunks_exact(m) {
            cost += u.iter().zip(&w.input).map(|(u, r)| r * u * u).sum::<f64>();
        }
        let slacks = &z[big_n * m..];
        cost + self.spec.penalty_weight * slacks.iter().sum::<f64>()
    }

    /// Constraint values in row order; `h` holds barrier values step-major.
    fn constraint_values(&self, z: &[f64], states: &[f64], h: &[f64]) -> Vec<f64> {
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        let no = self.n_obstacles();
        let nc = self.n_controls();
        let gamma = self.spec.barrier.gamma;
        let mut c = Vec::with_capacity(self.labels.len());
        for label in &self.labels {
            let v = match *label {
                RowLabel::InputBound { step, component, upper } => {
                    let u = z[step * m + component];
                    let b = self.model.input_bounds[component];
                    if upper { b.hi - u } else { u - b.lo }
                }
                RowLabel::StateBound { step, component, upper } => {
                    let x = states[step * n + component];
                    let b = self.model.state_bounds[component];
                    if upper { b.hi - x } else { x - b.lo }
                }
                RowLabel::Distance { k, i } => h[(k + 1) * no + i],
                RowLabel::Dcbf { k, i } => h[(k + 1) * no + i] - (1.0 - gamma) * h[k * no + i],
                RowLabel::SoftCbf { k, i } => {
                    z[nc + k * no + i] + h[(k + 1) * no + i] - (1.0 - gamma) * h[k * no + i]
                }
                RowLabel::SlackNonneg { k, i } => z[nc + k * no + i],
                RowLabel::Gcbf { i } => {
                    let d = self.spec.barrier.relative_degree;
                    h[d * no + i] - gcbf_decay(self.spec.barrier.eta, d) * h[i]
                }
                RowLabel::General(_) => unreachable!("OCP rows are always labeled"),
            };
            c.push(v);
        }
        c
    }

    fn barrier_from_states(&self, states: &[f64]) -> Vec<f64> {
        let n = self.model.state_dim();
        let mut h = Vec::with_capacity((self.spec.horizon + 1) * self.n_obstacles());
        for k in 0..=self.spec.horizon {
            let p = (states[k * n], states[k * n + 1]);
            for i in 0..self.n_obstacles() {
                h.push(h_value(p, self.centers[k][i], self.radii[i]));
            }
        }
        h
    }
}

impl NonlinearProgram for OcpProblem {
    fn n_vars(&self) -> usize {
        self.n_controls() + self.n_slacks()
    }

    fn row_labels(&self) -> &[RowLabel] {
        &self.labels
    }

    fn initial_guess(&self) -> Vec<f64> {
        self.guess.clone()
    }

    fn values(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let states = self.predicted_states(z);
        let h = self.barrier_from_states(&states);
        (self.cost_only(z, &states), self.constraint_values(z, &states, &h))
    }

    fn evaluate(&self, z: &[f64]) -> Evaluation {
        let nc = self.n_controls();
        let nv = self.n_vars();
        let traj = self.model.rollout_raw(&self.x0, &z[..nc]);
        let h = self.barrier_from_states(&traj.states);
        let cost = self.cost_only(z, &traj.states);
        let constraints = self.constraint_values(z, &traj.states, &h);

        let mut gradient = vec![0.0; nv];
        self.add_cost_gradient(z, &traj, &mut gradient);

        // Gauss-Newton model of the tracking cost.
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        let big_n = self.spec.horizon;
        let w = &self.spec.weights;
        let mut hessian = vec![0.0; nv * nv];
        for k in 1..=big_n {
            let q = if k == big_n { &w.terminal } else { &w.state };
            let s = traj.state_sensitivity(k);
            for r in 0..n {
                if q[r] == 0.0 {
                    continue;
                }
                let row = &s[r * nc..(r + 1) * nc];
                for a in 0..nc {
                    if row[a] == 0.0 {
                        continue;
                    }
                    for b in 0..nc {
                        hessian[a * nv + b] += 2.0 * q[r] * row[a] * row[b];
                    }
                }
            }
        }
        for k in 0..big_n {
            for j in 0..m {
                let a = k * m + j;
                hessian[a * nv + a] += 2.0 * w.input[j];
            }
        }
        for a in nc..nv {
            hessian[a * nv + a] = SLACK_CURVATURE;
        }

        let mut jacobian = vec![0.0; self.labels.len() * nv];
        for (r, label) in self.labels.iter().enumerate() {
            self.add_row_gradient(&traj, label, &mut jacobian[r * nv..(r + 1) * nv], 1.0);
        }

        Evaluation {
            cost,
            gradient,
            hessian,
            constraints,
            jacobian,
        }
    }

    /// Hessian of the Lagrangian in the control block by central differences
    /// of its gradient; the slack block keeps its fixed model curvature.
    fn hessian_model(&self, z: &[f64], evaluation: &Evaluation, multipliers: &[f64]) -> Vec<f64> {
        let linear_dynamics = self.model.kind == ModelKind::DoubleIntegrator;
        let curved_rows_active = self
            .labels
            .iter()
            .zip(multipliers)
            .any(|(l, v)| *v != 0.0 && !matches!(l, RowLabel::InputBound { .. } | RowLabel::SlackNonneg { .. }));
        if linear_dynamics && !curved_rows_active {
            return evaluation.hessian.clone();
        }
        let nc = self.n_controls();
        let nv = self.n_vars();
        let mut block = vec![0.0; nc * nc];
        let mut zp = z.to_vec();
        for b in 0..nc {
            let step = FD_STEP * (1.0 + z[b].abs());
            zp[b] = z[b] + step;
            let gp = self.lagrangian_control_gradient(&zp, multipliers);
            zp[b] = z[b] - step;
            let gm = self.lagrangian_control_gradient(&zp, multipliers);
            zp[b] = z[b];
            for a in 0..nc {
                block[a * nc + b] = (gp[a] - gm[a]) / (2.0 * step);
            }
        }
        let mut h = evaluation.hessian.clone();
        for a in 0..nc {
            for b in 0..nc {
                h[a * nv + b] = 0.5 * (block[a * nc + b] + block[b * nc + a]);
            }
        }
        h
    }
}

impl OcpProblem {
    fn add_cost_gradient(&self, z: &[f64], traj: &Trajectory, out: &mut [f64]) {
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        let nc = self.n_controls();
        let big_n = self.spec.horizon;
        let w = &self.spec.weights;
        for k in 1..=big_n {
            let e = self.tracking_error(traj.state(k));
            let q = if k == big_n { &w.terminal } else { &w.state };
            let s = traj.state_sensitivity(k);
            for r in 0..n {
                if q[r] == 0.0 {
                    continue;
                }
                let row = &s[r * nc..(r + 1) * nc];
                for a in 0..nc {
                    out[a] += 2.0 * q[r] * e[r] * row[a];
                }
            }
        }
        for k in 0..big_n {
            for j in 0..m {
                let a = k * m + j;
                out[a] += 2.0 * w.input[j] * z[a];
            }
        }
        for v in &mut out[nc..] {
            *v += self.spec.penalty_weight;
        }
    }

    /// Adds `scale · ∇c_row` into `out` (length `n_vars`).
    fn add_row_gradient(&self, traj: &Trajectory, label: &RowLabel, out: &mut [f64], scale: f64) {
        let m = self.model.input_dim();
        let nc = self.n_controls();
        let no = self.n_obstacles();
        let gamma = self.spec.barrier.gamma;
        // ∂h(x_k, o_k)/∂u for k ≥ 1; x_0 is fixed.
        let barrier_grad = |k: usize, i: usize, out: &mut [f64], scale: f64| {
            if k == 0 {
                return;
            }
            let x = traj.state(k);
            let (gx, gy) = h_gradient((x[0], x[1]), self.centers[k][i]);
            let s = traj.state_sensitivity(k);
            for a in 0..nc {
                out[a] += scale * (gx * s[a] + gy * s[nc + a]);
            }
        };
        match *label {
            RowLabel::InputBound { step, component, upper } => {
                out[step * m + component] += if upper { -scale } else { scale };
            }
            RowLabel::StateBound { step, component, upper } => {
                let s = traj.state_sensitivity(step);
                let sign = if upper { -scale } else { scale };
                for a in 0..nc {
                    out[a] += sign * s[component * nc + a];
                }
            }
            RowLabel::Distance { k, i } => barrier_grad(k + 1, i, out, scale),
            RowLabel::Dcbf { k, i } => {
                barrier_grad(k + 1, i, out, scale);
                barrier_grad(k, i, out, -(1.0 - gamma) * scale);
            }
            RowLabel::SoftCbf { k, i } => {
                barrier_grad(k + 1, i, out, scale);
                barrier_grad(k, i, out, -(1.0 - gamma) * scale);
                out[nc + k * no + i] += scale;
            }
            RowLabel::SlackNonneg { k, i } => out[nc + k * no + i] += scale,
            RowLabel::Gcbf { i } => {
                barrier_grad(self.spec.barrier.relative_degree, i, out, scale);
            }
            RowLabel::General(_) => unreachable!("OCP rows are always labeled"),
        }
    }

    /// Control part of `∇J − Σ λ_j ∇c_j`.
    fn lagrangian_control_gradient(&self, z: &[f64], multipliers: &[f64]) -> Vec<f64> {
        let nc = self.n_controls();
        let traj = self.model.rollout_raw(&self.x0, &z[..nc]);
        let mut g = vec![0.0; self.n_vars()];
        self.add_cost_gradient(z, &traj, &mut g);
        for (label, l) in self.labels.iter().zip(multipliers) {
            if *l != 0.0 {
                self.add_row_gradient(&traj, label, &mut g, -l);
            }
        }
        g.truncate(nc);
        g
    }
}
