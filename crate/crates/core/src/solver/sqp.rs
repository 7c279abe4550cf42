use std::collections::VecDeque;
use std::time::Instant;

use super::kkt::KktReport;
use super::linalg::{cholesky, dot, norm_inf};
use super::qp::{solve_qp, QpError, QpProblem};
use super::{
    Evaluation, IterationRecord, NonlinearProgram, Phase, SolverConfig, SolverResult, SolverStatus,
};

/// Curvature given to elastic variables in the restoration QP.
const ELASTIC_CURVATURE: f64 = 1.0;

/// Linear weight on elastic variables; large so that each restoration step
/// removes as much linearized violation as the hard rows allow.
const ELASTIC_WEIGHT: f64 = 1e4;

/// A restoration step that removes less than this fraction of the violation
/// counts as stalled.
const RESTORATION_PROGRESS: f64 = 1e-2;

fn violation(c: &[f64]) -> f64 {
    c.iter().map(|v| (-v).max(0.0)).sum()
}

fn elastic_violation(c: &[f64], elastic: &[usize]) -> f64 {
    elastic.iter().map(|&j| (-c[j]).max(0.0)).sum()
}

enum Restoration {
    Restored,
    Infeasible,
    Failed(String),
}

struct Sqp<'a> {
    problem: &'a dyn NonlinearProgram,
    config: &'a SolverConfig,
    n: usize,
    m: usize,
    z: Vec<f64>,
    multipliers: Vec<f64>,
    kkt: Option<KktReport>,
    iterations: usize,
    trace: Vec<IterationRecord>,
}

/// Solves `problem` from its initial guess.
///
/// Each iteration solves the QP built from the model Hessian and the
/// linearized constraints, then backtracks on the L1 merit `J + μ Σ max(0, −c)`.
/// When a QP is infeasible the solver switches to minimizing the total
/// violation of the elastic rows; if that stalls above the feasibility
/// tolerance for `infeasible_streak` consecutive iterations the problem is
/// declared infeasible.
pub fn solve(problem: &dyn NonlinearProgram, config: &SolverConfig) -> SolverResult {
    let start = Instant::now();
    let n = problem.n_vars();
    let m = problem.row_labels().len();
    let z = problem.initial_guess();
    let mut sqp = Sqp {
        problem,
        config,
        n,
        m,
        z,
        multipliers: vec![0.0; m],
        kkt: None,
        iterations: 0,
        trace: Vec::new(),
    };
    let (status, diagnostic) = if sqp.z.len() != n {
        (
            SolverStatus::MaxIter,
            Some(format!("initial guess has {} entries, expected {n}", sqp.z.len())),
        )
    } else {
        sqp.run()
    };
    let kkt = match sqp.kkt {
        Some(k) => k,
        None if sqp.z.len() == n => KktReport::from_evaluation(&problem.evaluate(&sqp.z), &sqp.multipliers),
        None => KktReport {
            stationarity: f64::INFINITY,
            primal_feasibility: f64::INFINITY,
            dual_feasibility: 0.0,
            complementarity: 0.0,
        },
    };
    SolverResult {
        status,
        solution: sqp.z,
        multipliers: sqp.multipliers,
        kkt,
        iterations: sqp.iterations,
        solve_time_ms: start.elapsed().as_secs_f64() * 1e3,
        trace: sqp.trace,
        diagnostic,
    }
}

impl Sqp<'_> {
    fn regularized_hessian(&self, e: &Evaluation, lagrangian: bool) -> Vec<f64> {
        let n = self.n;
        let mut h = if lagrangian {
            self.problem.hessian_model(&self.z, e, &self.multipliers)
        } else {
            e.hessian.clone()
        };
        for i in 0..n {
            h[i * n + i] += self.config.hessian_regularization;
        }
        if cholesky(&h, n).is_some() {
            return h;
        }
        let scale = 1.0 + (0..n).fold(0.0f64, |m, i| m.max(h[i * n + i].abs()));

        // Penalize motion off the previous active set first; this leaves the
        // curvature along the active constraints' tangent space unchanged.
        // If the reduced Hessian itself is indefinite, use the cost model.
        let mut outer = vec![0.0; n * n];
        let mut any_active = false;
        for (j, l) in self.multipliers.iter().enumerate() {
            let a = &e.jacobian[j * n..(j + 1) * n];
            let norm2 = dot(a, a);
            if *l <= 0.0 || norm2 == 0.0 {
                continue;
            }
            any_active = true;
            for r in 0..n {
                if a[r] == 0.0 {
                    continue;
                }
                for c in 0..n {
                    outer[r * n + c] += a[r] * a[c] / norm2;
                }
            }
        }
        if any_active {
            for k in -2..=6 {
                let rho = scale * 10f64.powi(k);
                let trial: Vec<f64> = h.iter().zip(&outer).map(|(h, o)| h + rho * o).collect();
                if cholesky(&trial, n).is_some() {
                    return trial;
                }
            }
        }

        let mut gn = e.hessian.clone();
        for i in 0..n {
            gn[i * n + i] += self.config.hessian_regularization;
        }
        gn
    }

    fn converged(&self, k: &KktReport) -> bool {
        let c = self.config;
        k.stationarity <= c.stationarity_tol
            && k.primal_feasibility <= c.feasibility_tol
            && k.dual_feasibility <= c.feasibility_tol
            && k.complementarity <= c.complementarity_tol
    }

    fn run(&mut self) -> (SolverStatus, Option<String>) {
        let cfg = self.config;
        let mut penalty = 1.0f64;
        // (cost, violation) of recent iterates, newest last
        let mut history: VecDeque<(f64, f64)> = VecDeque::new();
        while self.iterations < cfg.max_iterations {
            self.iterations += 1;
            let e = self.problem.evaluate(&self.z);
            if !e.is_finite() {
                return (
                    SolverStatus::MaxIter,
                    Some("non-finite cost or constraint evaluation".into()),
                );
            }
            let h = self.regularized_hessian(&e, true);
            let b: Vec<f64> = e.constraints.iter().map(|c| -c).collect();
            let qp = QpProblem {
                n: self.n,
                hessian: &h,
                gradient: &e.gradient,
                a: &e.jacobian,
                b: &b,
            };
            let sol = match solve_qp(&qp) {
                Ok(sol) => sol,
                Err(QpError::Infeasible) => match self.restore() {
                    Restoration::Restored => {
                        history.clear();
                        continue;
                    }
                    Restoration::Infeasible => return (SolverStatus::Infeasible, None),
                    Restoration::Failed(msg) => return (SolverStatus::MaxIter, Some(msg)),
                },
                Err(err) => {
                    return (SolverStatus::MaxIter, Some(format!("QP subproblem failed: {err:?}")))
                }
            };

            let kkt = KktReport::from_evaluation(&e, &sol.multipliers);
            self.multipliers = sol.multipliers;
            self.kkt = Some(kkt);
            if self.converged(&kkt) {
                return (SolverStatus::Solved, None);
            }

            let lam_max = norm_inf(&self.multipliers);
            if penalty < 1.1 * lam_max {
                penalty = 1.5 * lam_max + 1e-3;
            }
            let d = sol.x;
            let viol0 = violation(&e.constraints);
            let merit0 = e.cost + penalty * viol0;
            let slope = dot(&e.gradient, &d) - penalty * viol0;

            history.push_back((e.cost, viol0));
            while history.len() > cfg.nonmonotone_memory.max(1) {
                history.pop_front();
            }
            let reference = history
                .iter()
                .map(|(cost, viol)| cost + penalty * viol)
                .fold(merit0, f64::max);
            let sufficient =
                |merit: f64, t: f64| merit.is_finite() && merit <= reference + cfg.armijo * t * slope.min(0.0);

            let full: Vec<f64> = self.z.iter().zip(&d).map(|(z, d)| z + d).collect();
            let (cost, c_full) = self.problem.values(&full);
            let merit_full = cost + penalty * violation(&c_full);
            let mut accepted = sufficient(merit_full, 1.0).then(|| (full.clone(), merit_full, violation(&c_full), 1.0));
            if accepted.is_none() {
                accepted = self.second_order_correction(&qp, &d, &c_full, penalty, &sufficient);
            }
            let mut t = 0.5;
            while accepted.is_none() && t >= cfg.min_step {
                let trial: Vec<f64> = self.z.iter().zip(&d).map(|(z, d)| z + t * d).collect();
                let (cost, c) = self.problem.values(&trial);
                let merit = cost + penalty * violation(&c);
                if sufficient(merit, t) {
                    accepted = Some((trial, merit, violation(&c), t));
                }
                t *= cfg.backtrack;
            }
            let Some((trial, merit, viol, t)) = accepted else {
                // At roundoff level the merit cannot resolve the step; the
                // full step may still be a KKT point.
                let kkt = KktReport::from_evaluation(&self.problem.evaluate(&full), &self.multipliers);
                if self.converged(&kkt) {
                    self.z = full;
                    self.kkt = Some(kkt);
                    return (SolverStatus::Solved, None);
                }
                return (
                    SolverStatus::MaxIter,
                    Some(format!(
                        "line search failed (step norm {:.3e}, slope {:.3e})",
                        norm_inf(&d),
                        slope
                    )),
                );
            };
            if cfg.trace {
                self.trace.push(IterationRecord {
                    iteration: self.iterations,
                    phase: Phase::Optimality,
                    merit: merit0,
                    merit_after: merit,
                    penalty,
                    step_length: t,
                    violation: viol,
                });
            }
            self.z = trial;
        }
        (SolverStatus::MaxIter, Some("iteration limit reached".into()))
    }

    /// Re-solves the QP with the constraint values at the full step, which
    /// removes the second-order constraint error that makes the merit reject
    /// a good step near the solution.
    fn second_order_correction(
        &self,
        qp: &QpProblem,
        d: &[f64],
        c_full: &[f64],
        penalty: f64,
        sufficient: &dyn Fn(f64, f64) -> bool,
    ) -> Option<(Vec<f64>, f64, f64, f64)> {
        let n = self.n;
        let b: Vec<f64> = (0..self.m)
            .map(|j| dot(&qp.a[j * n..(j + 1) * n], d) - c_full[j])
            .collect();
        let sol = solve_qp(&QpProblem { b: &b, ..*qp }).ok()?;
        let trial: Vec<f64> = self.z.iter().zip(&sol.x).map(|(z, d)| z + d).collect();
        let (cost, c) = self.problem.values(&trial);
        let merit = cost + penalty * violation(&c);
        sufficient(merit, 1.0).then(|| (trial, merit, violation(&c), 1.0))
    }

    /// Drives the elastic rows toward feasibility with a sequence of elastic
    /// QPs `min ½dᵀHd + ½vᵀv + ρΣv s.t. c + ∇c d + v ≥ 0, v ≥ 0`.
    fn restore(&mut self) -> Restoration {
        let cfg = self.config;
        let labels = self.problem.row_labels();
        let elastic: Vec<usize> = (0..self.m).filter(|&j| labels[j].is_elastic()).collect();
        let ne = elastic.len();
        let n = self.n;
        let ntot = n + ne;
        let mut streak = 0;
        // first pass runs at the iterate whose QP just failed
        let mut first = true;
        loop {
            if !first {
                if self.iterations >= cfg.max_iterations {
                    return Restoration::Failed("iteration limit reached during restoration".into());
                }
                self.iterations += 1;
            }
            first = false;
            let e = self.problem.evaluate(&self.z);
            if !e.is_finite() {
                return Restoration::Failed("non-finite evaluation during restoration".into());
            }
            let v0 = elastic_violation(&e.constraints, &elastic);

            let hd = self.regularized_hessian(&e, false);
            let mut h = vec![0.0; ntot * ntot];
            for i in 0..n {
                h[i * ntot..i * ntot + n].copy_from_slice(&hd[i * n..(i + 1) * n]);
            }
            for k in 0..ne {
                h[(n + k) * ntot + n + k] = ELASTIC_CURVATURE;
            }
            let mut g = vec![0.0; ntot];
            g[n..].iter_mut().for_each(|v| *v = ELASTIC_WEIGHT);
            let rows = self.m + ne;
            let mut a = vec![0.0; rows * ntot];
            let mut b = vec![0.0; rows];
            let mut slot = vec![usize::MAX; self.m];
            for (k, &j) in elastic.iter().enumerate() {
                slot[j] = k;
            }
            for j in 0..self.m {
                a[j * ntot..j * ntot + n].copy_from_slice(&e.jacobian[j * n..(j + 1) * n]);
                if slot[j] != usize::MAX {
                    a[j * ntot + n + slot[j]] = 1.0;
                }
                b[j] = -e.constraints[j];
            }
            for k in 0..ne {
                a[(self.m + k) * ntot + n + k] = 1.0;
            }
            let qp = QpProblem {
                n: ntot,
                hessian: &h,
                gradient: &g,
                a: &a,
                b: &b,
            };
            let sol = match solve_qp(&qp) {
                Ok(s) => s,
                Err(err) => {
                    return Restoration::Failed(format!("elastic QP failed: {err:?}"));
                }
            };
            let d = &sol.x[..n];
            let model_violation: f64 = sol.x[n..].iter().map(|v| v.max(0.0)).sum();
            let predicted = v0 - model_violation;

            let mut moved = false;
            if predicted > 1e-10f64.max(1e-6 * v0) {
                let mut t = 1.0;
                while t >= cfg.min_step {
                    let trial: Vec<f64> = self.z.iter().zip(d).map(|(z, d)| z + t * d).collect();
                    let (_, c) = self.problem.values(&trial);
                    let v = elastic_violation(&c, &elastic);
                    if v.is_finite() && v <= v0 - cfg.armijo * t * predicted {
                        if cfg.trace {
                            self.trace.push(IterationRecord {
                                iteration: self.iterations,
                                phase: Phase::Restoration,
                                merit: v0,
                                merit_after: v,
                                penalty: 1.0,
                                step_length: t,
                                violation: v,
                            });
                        }
                        self.z = trial;
                        moved = v0 - v > RESTORATION_PROGRESS * v0;
                        if v <= cfg.feasibility_tol {
                            return Restoration::Restored;
                        }
                        break;
                    }
                    t *= cfg.backtrack;
                }
            }
            if moved {
                streak = 0;
            } else {
                streak += 1;
                if streak >= cfg.infeasible_streak {
                    return Restoration::Infeasible;
                }
            }
        }
    }
}
