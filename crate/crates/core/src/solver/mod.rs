//! In-repo NLP solver: SQP over dense active-set QP subproblems.
//!
//! Constraints are written `c(z) ≥ 0` and the Lagrangian is `J(z) − λᵀc(z)`
//! with `λ ≥ 0`. Multipliers reported by [`solve`] and checked by
//! [`kkt_check`] follow that convention.

mod kkt;
pub(crate) mod linalg;
mod penalty;
pub mod qp;
mod sqp;

use serde::{Deserialize, Serialize};

pub use kkt::{kkt_check, KktReport};
pub use penalty::{
    estimate_penalty_weight, penalty_from_multiplier_norms, PenaltyEstimate, PenaltySample,
    PENALTY_FLOOR,
};
pub use sqp::solve;

/// What a constraint row encodes. Indices are horizon step `k` and obstacle `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowLabel {
    InputBound { step: usize, component: usize, upper: bool },
    StateBound { step: usize, component: usize, upper: bool },
    Distance { k: usize, i: usize },
    Dcbf { k: usize, i: usize },
    SoftCbf { k: usize, i: usize },
    SlackNonneg { k: usize, i: usize },
    Gcbf { i: usize },
    /// Rows of problems that are not built from an OCP.
    General(usize),
}

impl RowLabel {
    /// Rows that receive an elastic variable while searching for a feasible
    /// point. Box rows and soft rows (which already carry a slack) stay hard.
    pub fn is_elastic(&self) -> bool {
        matches!(
            self,
            RowLabel::Distance { .. } | RowLabel::Dcbf { .. } | RowLabel::Gcbf { .. } | RowLabel::General(_)
        )
    }

    /// Obstacle rows whose multipliers feed the penalty-weight estimate.
    pub fn is_cbf(&self) -> bool {
        matches!(self, RowLabel::Dcbf { .. } | RowLabel::SoftCbf { .. })
    }
}

/// Everything the SQP step needs at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub gradient: Vec<f64>,
    /// Positive semidefinite model of the cost Hessian, `n × n` row-major.
    pub hessian: Vec<f64>,
    pub constraints: Vec<f64>,
    /// `m × n` row-major.
    pub jacobian: Vec<f64>,
}

impl Evaluation {
    pub fn is_finite(&self) -> bool {
        self.cost.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.hessian.iter().all(|v| v.is_finite())
            && self.constraints.iter().all(|v| v.is_finite())
            && self.jacobian.iter().all(|v| v.is_finite())
    }
}

/// A smooth inequality-constrained program `min J(z) s.t. c(z) ≥ 0`.
pub trait NonlinearProgram {
    fn n_vars(&self) -> usize;

    fn row_labels(&self) -> &[RowLabel];

    fn initial_guess(&self) -> Vec<f64>;

    fn evaluate(&self, z: &[f64]) -> Evaluation;

    /// Hessian of the Lagrangian (or a model of it) at `z`, given the
    /// multiplier estimate from the previous iterate. It may be indefinite;
    /// the solver convexifies it before building the QP.
    fn hessian_model(&self, _z: &[f64], evaluation: &Evaluation, _multipliers: &[f64]) -> Vec<f64> {
        evaluation.hessian.clone()
    }

    /// Cost and constraint values only; used by the line search.
    fn values(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let e = self.evaluate(z);
        (e.cost, e.constraints)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Solved,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub stationarity_tol: f64,
    pub feasibility_tol: f64,
    pub complementarity_tol: f64,
    /// Added to the Hessian diagonal before each QP.
    pub hessian_regularization: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub min_step: f64,
    /// Number of recent merit values the line search compares against; 1
    /// gives a monotone search.
    pub nonmonotone_memory: usize,
    /// Consecutive stalled restoration iterations before declaring the
    /// problem infeasible.
    pub infeasible_streak: usize,
    /// Collect one [`IterationRecord`] per iteration.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100,
            stationarity_tol: 1e-6,
            feasibility_tol: 1e-6,
            complementarity_tol: 1e-6,
            hessian_regularization: 1e-6,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-10,
            nonmonotone_memory: 5,
            infeasible_streak: 5,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Optimality,
    Restoration,
}

/// Per-iteration diagnostic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    /// Merit before the step, evaluated with `penalty`.
    pub merit: f64,
    /// Merit after the accepted step with the same `penalty`.
    pub merit_after: f64,
    pub penalty: f64,
    pub step_length: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: SolverStatus,
    pub solution: Vec<f64>,
    /// One multiplier per constraint row.
    pub multipliers: Vec<f64>,
    pub kkt: KktReport,
    pub iterations: usize,
    pub solve_time_ms: f64,
    pub trace: Vec<IterationRecord>,
    pub diagnostic: Option<String>,
}

impl SolverResult {
    /// Equality of everything except wall-clock time.
    pub fn same_outcome(&self, other: &SolverResult) -> bool {
        self.status == other.status
            && self.solution == other.solution
            && self.multipliers == other.multipliers
            && self.kkt == other.kkt
            && self.iterations == other.iterations
            && self.trace == other.trace
            && self.diagnostic == other.diagnostic
    }
}
