//! Dense strictly convex QP via the Goldfarb–Idnani dual active-set method.
//!
//! ```text
//!     minimize    ½ xᵀ H x + gᵀ x
//!     subject to  A x ≥ b
//! ```
//!
//! The method starts from the unconstrained minimizer and adds violated
//! constraints one at a time while keeping dual feasibility, so an empty
//! feasible set is detected directly: a violated constraint that can be neither
//! reached by a primal step nor made room for by dropping an active one.
//! The factorization `Jᵀ N = [R; 0]` with `J Jᵀ = H⁻¹` is kept up to date with
//! Givens rotations.

use super::linalg::{cholesky, dot, invert_lower, norm_inf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    Infeasible,
    NotPositiveDefinite,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: Vec<f64>,
    /// Active rows in the order they entered the working set.
    pub active: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
}

/// Borrowed QP data. `hessian` is `n × n` and `a` is `m × n`, both row-major.
#[derive(Debug, Clone, Copy)]
pub struct QpProblem<'a> {
    pub n: usize,
    pub hessian: &'a [f64],
    pub gradient: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
}

impl QpProblem<'_> {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.a[j * self.n..(j + 1) * self.n]
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut q = 0.0;
        for i in 0..n {
            q += x[i] * dot(&self.hessian[i * n..(i + 1) * n], x);
        }
        0.5 * q + dot(self.gradient, x)
    }
}

/// Nonzero pattern of one constraint normal.
struct SparseRow {
    idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRow {
    fn new(row: &[f64]) -> Self {
        let (idx, vals) = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseRow { idx, vals }
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.vals).map(|(i, v)| v * x[*i]).sum()
    }
}

struct Factor {
    n: usize,
    /// Column `c` of J is stored contiguously at `j[c*n..(c+1)*n]`.
    j: Vec<f64>,
    /// Upper-triangular R, row-major `n × n`, leading `q × q` block in use.
    r: Vec<f64>,
    q: usize,
}

impl Factor {
    fn col(&self, c: usize) -> &[f64] {
        &self.j[c * self.n..(c + 1) * self.n]
    }

    fn rotate_cols(&mut self, c1: usize, c2: usize, cs: f64, sn: f64) {
        let n = self.n;
        for r in 0..n {
            let a = self.j[c1 * n + r];
            let b = self.j[c2 * n + r];
            self.j[c1 * n + r] = cs * a + sn * b;
            self.j[c2 * n + r] = -sn * a + cs * b;
        }
    }

    /// Appends a constraint whose transformed normal is `d = Jᵀ a_p`.
    fn add(&mut self, mut d: Vec<f64>) {
        let n = self.n;
        let q = self.q;
        for c in (q + 1..n).rev() {
            let (a, b) = (d[c - 1], d[c]);
            if b == 0.0 {
                continue;
            }
            let rho = a.hypot(b);
            let (cs, sn) = (a / rho, b / rho);
            d[c - 1] = rho;
            d[c] = 0.0;
            self.rotate_cols(c - 1, c, cs, sn);
        }
        for r in 0..=q {
            self.r[r * n + q] = d[r];
        }
        self.q += 1;
    }

    /// Removes the `k`-th active constraint and restores triangularity.
    fn drop(&mut self, k: usize) {
        let n = self.n;
        let q = self.q;
        for c in k..q - 1 {
            for r in 0..=c + 1 {
                self.r[r * n + c] = self.r[r * n + c + 1];
            }
        }
        for r in 0..q {
            self.r[r * n + q - 1] = 0.0;
        }
        for c in k..q - 1 {
            let a = self.r[c * n + c];
            let b = self.r[(c + 1) * n + c];
            if b == 0.0 {
                continue;
            }
            let rho = a.hypot(b);
            let (cs, sn) = (a / rho, b / rho);
            for cc in c..q - 1 {
                let x1 = self.r[c * n + cc];
                let x2 = self.r[(c + 1) * n + cc];
                self.r[c * n + cc] = cs * x1 + sn * x2;
                self.r[(c + 1) * n + cc] = -sn * x1 + cs * x2;
            }
            self.r[(c + 1) * n + c] = 0.0;
            self.rotate_cols(c, c + 1, cs, sn);
        }
        self.q -= 1;
    }

    /// Solves `R r = d[..q]` by back substitution.
    fn solve_r(&self, d: &[f64]) -> Vec<f64> {
        let n = self.n;
        let q = self.q;
        let mut out = d[..q].to_vec();
        for i in (0..q).rev() {
            let mut s = out[i];
            for k in i + 1..q {
                s -= self.r[i * n + k] * out[k];
            }
            out[i] = s / self.r[i * n + i];
        }
        out
    }
}

pub fn solve_qp(p: &QpProblem<'_>) -> Result<QpSolution, QpError> {
    let n = p.n;
    let m = p.m();
    debug_assert_eq!(p.hessian.len(), n * n);
    debug_assert_eq!(p.a.len(), m * n);

    let l = cholesky(p.hessian, n).ok_or(QpError::NotPositiveDefinite)?;
    // J = L⁻ᵀ, so column c of J is row c of L⁻¹.
    let mut f = Factor {
        n,
        j: invert_lower(&l, n),
        r: vec![0.0; n * n],
        q: 0,
    };

    // unconstrained minimizer x = -J Jᵀ g
    let mut x = vec![0.0; n];
    for c in 0..n {
        let w = dot(f.col(c), p.gradient);
        for (xi, jc) in x.iter_mut().zip(f.col(c)) {
            *xi -= w * jc;
        }
    }

    let rows: Vec<SparseRow> = (0..m).map(|j| SparseRow::new(p.row(j))).collect();
    let row_norms: Vec<f64> = rows.iter().map(|r| r.vals.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut is_active = vec![false; m];
    let max_iter = 10 * (n + m) + 50;
    let mut iterations = 0;

    loop {
        // pick the most violated constraint, scaled by its normal
        let xnorm = norm_inf(&x);
        let mut pick: Option<(usize, f64)> = None;
        for jrow in 0..m {
            if is_active[jrow] {
                continue;
            }
            let s = rows[jrow].dot(&x) - p.b[jrow];
            let tol = 1e-12 * (1.0 + p.b[jrow].abs() + row_norms[jrow] * xnorm);
            if s < -tol {
                let scaled = s / row_norms[jrow].max(1e-300);
                if pick.map_or(true, |(_, best)| scaled < best) {
                    pick = Some((jrow, scaled));
                }
            }
        }
        let Some((pidx, _)) = pick else {
            let mut multipliers = vec![0.0; m];
            for (a, ui) in active.iter().zip(&u) {
                multipliers[*a] = *ui;
            }
            return Ok(QpSolution {
                objective: p.objective(&x),
                x,
                multipliers,
                active,
                iterations,
            });
        };
        let np = &rows[pidx];
        u.push(0.0);

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let q = f.q;
            let d: Vec<f64> = (0..n).map(|c| np.dot(f.col(c))).collect();
            let d2sq: f64 = d[q..].iter().map(|v| v * v).sum();
            let dsq: f64 = d.iter().map(|v| v * v).sum();
            let r = f.solve_r(&d);

            let rnorm = norm_inf(&r);
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (i, ri) in r.iter().enumerate() {
                if *ri > 1e-12 * (1.0 + rnorm) {
                    let ratio = u[i] / ri;
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(i);
                    }
                }
            }
            let dependent = d2sq <= 1e-16 * dsq || dsq == 0.0;
            let t2 = if dependent {
                f64::INFINITY
            } else {
                (-(np.dot(&x) - p.b[pidx]) / d2sq).max(0.0)
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }

            if !dependent {
                // z = J₂ d₂
                for c in q..n {
                    let w = t * d[c];
                    if w != 0.0 {
                        for (xi, jc) in x.iter_mut().zip(f.col(c)) {
                            *xi += w * jc;
                        }
                    }
                }
            }
            for (ui, ri) in u.iter_mut().zip(&r) {
                *ui -= t * ri;
            }
            u[q] += t;

            if t2 <= t1 {
                f.add(d);
                active.push(pidx);
                is_active[pidx] = true;
                break;
            }
            let k = block.expect("finite partial step has a blocking constraint");
            f.drop(k);
            is_active[active[k]] = false;
            active.remove(k);
            u.remove(k);
        }
    }
}
