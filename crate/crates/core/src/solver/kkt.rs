use serde::{Deserialize, Serialize};

use super::linalg::{mat_t_vec, norm_inf};
use super::{Evaluation, NonlinearProgram};

/// First-order optimality residuals for `min J s.t. c ≥ 0` with Lagrangian
/// `J − λᵀc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖∇J − ∇cᵀλ‖∞`
    pub stationarity: f64,
    /// `max_j max(0, −c_j)`
    pub primal_feasibility: f64,
    /// `max_j max(0, −λ_j)`
    pub dual_feasibility: f64,
    /// `max_j |λ_j c_j|`
    pub complementarity: f64,
}

impl KktReport {
    pub fn within(&self, tol: f64) -> bool {
        self.stationarity <= tol
            && self.primal_feasibility <= tol
            && self.dual_feasibility <= tol
            && self.complementarity <= tol
    }

    pub(crate) fn from_evaluation(e: &Evaluation, multipliers: &[f64]) -> KktReport {
        let n = e.gradient.len();
        let jt_lambda = mat_t_vec(&e.jacobian, multipliers, n);
        let residual: Vec<f64> = e
            .gradient
            .iter()
            .zip(&jt_lambda)
            .map(|(g, a)| g - a)
            .collect();
        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        let mut comp = 0.0f64;
        for (c, l) in e.constraints.iter().zip(multipliers) {
            primal = primal.max(-c);
            dual = dual.max(-l);
            comp = comp.max((c * l).abs());
        }
        KktReport {
            stationarity: norm_inf(&residual),
            primal_feasibility: primal,
            dual_feasibility: dual,
            complementarity: comp,
        }
    }
}

/// Evaluates the KKT residuals of `problem` at `z` with multipliers `λ`.
pub fn kkt_check(problem: &dyn NonlinearProgram, z: &[f64], multipliers: &[f64]) -> KktReport {
    assert_eq!(z.len(), problem.n_vars(), "candidate dimension mismatch");
    assert_eq!(
        multipliers.len(),
        problem.row_labels().len(),
        "multiplier dimension mismatch"
    );
    KktReport::from_evaluation(&problem.evaluate(z), multipliers)
}
