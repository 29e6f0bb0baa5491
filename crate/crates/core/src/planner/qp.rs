//! Dense convex quadratic programming by operator splitting (ADMM) with an
//! active-set polishing step.
//!
//! Problem form:
//!
//! ```text
//! minimize   ½ xᵀP x + qᵀx
//! subject to l ≤ A x ≤ u
//! ```
//!
//! `P` only needs to be positive semidefinite (the flip planner's terminal
//! cost has rank 2). The solver contract is the reported KKT residual: the
//! ∞-norm maximum of stationarity, primal feasibility and complementarity,
//! measured on the original (unscaled) data.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("inconsistent QP dimensions")]
    BadDimensions,
    #[error("constraint row {row} has l = {l} > u = {u}")]
    CrossedBounds { row: usize, l: f64, u: f64 },
    #[error("problem appears primal infeasible; worst violation {violation:.3e} at row {row}")]
    Infeasible { row: usize, violation: f64 },
    #[error("no convergence in {iterations} iterations (KKT residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Dense QP data.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
}

impl DenseQp {
    fn validate(&self) -> Result<(), QpError> {
        let n = self.q.len();
        let m = self.l.len();
        if self.p.nrows() != n || self.p.ncols() != n || self.a.ncols() != n
            || self.a.nrows() != m || self.u.len() != m
        {
            return Err(QpError::BadDimensions);
        }
        for i in 0..m {
            if self.l[i] > self.u[i] {
                return Err(QpError::CrossedBounds { row: i, l: self.l[i], u: self.u[i] });
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }
}

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub max_iters: usize,
    /// Accept once the unscaled KKT residual is below this.
    pub target_kkt: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub rho_init: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iters: 20_000, target_kkt: 1e-8, sigma: 1e-6, alpha: 1.6, rho_init: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers for `l ≤ Ax ≤ u` (positive at the upper bound, negative at
    /// the lower).
    pub y: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    pub polished: bool,
}

/// Unscaled KKT residual of a candidate primal/dual pair.
pub fn kkt_residual(qp: &DenseQp, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let ax = &qp.a * x;
    let stationarity = (&qp.p * x + &qp.q + qp.a.transpose() * y).abs().max();
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..ax.len() {
        primal = primal.max(qp.l[i] - ax[i]).max(ax[i] - qp.u[i]);
        if y[i] > 0.0 {
            comp = comp.max(y[i] * (qp.u[i] - ax[i]).abs());
        } else if y[i] < 0.0 {
            comp = comp.max(-y[i] * (ax[i] - qp.l[i]).abs());
        }
    }
    stationarity.max(primal.max(0.0)).max(comp)
}

/// Solves the QP to the requested KKT residual.
pub fn solve_qp(qp: &DenseQp, opts: &QpOptions) -> Result<QpSolution, QpError> {
    qp.validate()?;
    let n = qp.q.len();
    let m = qp.l.len();

    // row equilibration of A: unit ∞-norm rows
    let mut row_scale = DVector::from_element(m, 1.0);
    for i in 0..m {
        let norm = qp.a.row(i).amax();
        if norm > 1e-12 {
            row_scale[i] = 1.0 / norm;
        }
    }
    let a_s = DMatrix::from_fn(m, n, |i, j| qp.a[(i, j)] * row_scale[i]);
    let l_s = DVector::from_fn(m, |i, _| qp.l[i] * row_scale[i]);
    let u_s = DVector::from_fn(m, |i, _| qp.u[i] * row_scale[i]);

    let at_a = a_s.transpose() * &a_s;
    let mut rho = opts.rho_init;
    let factor = |rho: f64| -> Cholesky<f64, nalgebra::Dyn> {
        let mut mmat = qp.p.clone() + &at_a * rho;
        for i in 0..n {
            mmat[(i, i)] += opts.sigma;
        }
        Cholesky::new(mmat).expect("P + σI + ρAᵀA is positive definite")
    };
    let mut chol = factor(rho);

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let mut best = attempt_result(qp, &x, &unscale_duals(&y, &row_scale));
    let mut best_primal = f64::INFINITY;

    for iter in 1..=opts.max_iters {
        let rhs = &x * opts.sigma - &qp.q + a_s.transpose() * (&z * rho - &y);
        let x_tilde = chol.solve(&rhs);
        let ax_tilde = &a_s * &x_tilde;
        let x_next = &x_tilde * opts.alpha + &x * (1.0 - opts.alpha);
        let z_relaxed = &ax_tilde * opts.alpha + &z * (1.0 - opts.alpha);
        let mut z_next = &z_relaxed + &y / rho;
        for i in 0..m {
            z_next[i] = z_next[i].clamp(l_s[i], u_s[i]);
        }
        y += (&z_relaxed - &z_next) * rho;
        x = x_next;
        z = z_next;

        if iter % 25 == 0 || iter == opts.max_iters {
            let ax = &a_s * &x;
            let r_prim = (&ax - &z).abs().max();
            let r_dual =
                (&qp.p * &x + &qp.q + a_s.transpose() * &y).abs().max();
            best_primal = best_primal.min(r_prim);

            if r_prim < 1e-4 && r_dual < 1e-2 {
                if let Some(polished) = polish(qp, &a_s, &row_scale, &x, &y) {
                    let res = kkt_residual(qp, &polished.0, &polished.1);
                    if res <= opts.target_kkt {
                        return Ok(QpSolution {
                            objective: qp.objective(&polished.0),
                            x: polished.0,
                            y: polished.1,
                            kkt_residual: res,
                            iterations: iter,
                            polished: true,
                        });
                    }
                }
            }
            let candidate = attempt_result(qp, &x, &unscale_duals(&y, &row_scale));
            if candidate.2 < best.2 {
                best = candidate;
            }
            if best.2 <= opts.target_kkt {
                return Ok(QpSolution {
                    objective: qp.objective(&best.0),
                    x: best.0,
                    y: best.1,
                    kkt_residual: best.2,
                    iterations: iter,
                    polished: false,
                });
            }
            // stalled with a large primal gap: declare infeasibility
            if iter >= 4000 && best_primal > 1e-3 && r_prim > 0.5 * best_primal {
                let ax_full = &qp.a * &x;
                let (mut row, mut violation) = (0, 0.0);
                for i in 0..m {
                    let v = (qp.l[i] - ax_full[i]).max(ax_full[i] - qp.u[i]);
                    if v > violation {
                        violation = v;
                        row = i;
                    }
                }
                return Err(QpError::Infeasible { row, violation });
            }
            // residual-balancing step-size adaptation
            if iter % 100 == 0 && r_prim > 0.0 && r_dual > 0.0 {
                let ratio = (r_prim / r_dual).sqrt();
                if ratio > 5.0 || ratio < 0.2 {
                    rho = (rho * ratio).clamp(1e-6, 1e6);
                    chol = factor(rho);
                }
            }
        }
    }
    Err(QpError::NoConvergence { iterations: opts.max_iters, residual: best.2 })
}

fn unscale_duals(y_scaled: &DVector<f64>, row_scale: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(y_scaled.len(), |i, _| y_scaled[i] * row_scale[i])
}

fn attempt_result(
    qp: &DenseQp,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, f64) {
    let res = kkt_residual(qp, x, y);
    (x.clone(), y.clone(), res)
}

/// Solves the equality-constrained problem on the active set implied by the
/// dual signs, with static regularization plus iterative refinement. Returns
/// the polished primal/dual pair in unscaled coordinates.
fn polish(
    qp: &DenseQp,
    a_s: &DMatrix<f64>,
    row_scale: &DVector<f64>,
    x: &DVector<f64>,
    y_scaled: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = qp.q.len();
    let m = qp.l.len();
    let ax = a_s * x;
    let mut active: Vec<(usize, bool)> = Vec::new(); // (row, at_upper)
    for i in 0..m {
        let l = qp.l[i] * row_scale[i];
        let u = qp.u[i] * row_scale[i];
        if y_scaled[i] < -1e-12 || (ax[i] - l).abs() < 1e-7 * (1.0 + l.abs()) {
            if qp.l[i].is_finite() {
                active.push((i, false));
            }
        } else if y_scaled[i] > 1e-12 || (u - ax[i]).abs() < 1e-7 * (1.0 + u.abs()) {
            if qp.u[i].is_finite() {
                active.push((i, true));
            }
        }
    }
    let k = active.len();
    let dim = n + k;
    let delta = 1e-9 * (1.0 + qp.p.amax());
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    for i in 0..n {
        kkt[(i, i)] += delta;
    }
    for (r, &(row, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = qp.a[(row, j)];
            kkt[(j, n + r)] = qp.a[(row, j)];
        }
        kkt[(n + r, n + r)] = -delta;
    }
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -qp.q[j];
    }
    for (r, &(row, at_upper)) in active.iter().enumerate() {
        rhs[n + r] = if at_upper { qp.u[row] } else { qp.l[row] };
    }
    let lu = kkt.clone().lu();
    let mut sol = lu.solve(&rhs)?;
    // refine against the unregularized KKT operator
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let xv = v.rows(0, n).into_owned();
        let nu = v.rows(n, k).into_owned();
        let mut out = DVector::zeros(dim);
        let mut top = &qp.p * &xv;
        for (r, &(row, _)) in active.iter().enumerate() {
            let arow = qp.a.row(row).transpose();
            top += arow * nu[r];
        }
        out.rows_mut(0, n).copy_from(&top);
        for (r, &(row, _)) in active.iter().enumerate() {
            out[n + r] = qp.a.row(row).transpose().dot(&xv);
        }
        out
    };
    for _ in 0..3 {
        let residual = &rhs - apply(&sol);
        if residual.abs().max() < 1e-14 {
            break;
        }
        let correction = lu.solve(&residual)?;
        sol += correction;
    }
    let x_pol = sol.rows(0, n).into_owned();
    let mut y_pol = DVector::zeros(m);
    for (r, &(row, at_upper)) in active.iter().enumerate() {
        let nu = sol[n + r];
        // keep only sign-consistent multipliers
        y_pol[row] = if at_upper { nu.max(0.0) } else { nu.min(0.0) };
    }
    Some((x_pol, y_pol))
}
