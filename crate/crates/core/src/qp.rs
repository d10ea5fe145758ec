//! Dense convex quadratic programming.
//!
//! Problems are stated in the canonical form
//!
//! ```text
//!     minimize     1/2 z' Q z + c' z
//!     subject to   G z <= h
//!                  A z  = b
//! ```
//!
//! and solved with a primal-dual path-following interior-point method using
//! Mehrotra's predictor-corrector. A converged iterate is optionally polished
//! by solving the equality-constrained problem on the detected active set,
//! which recovers the optimum to near machine precision whenever the active
//! set is non-degenerate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use thiserror::Error;

/// Errors raised while assembling a [`QuadraticProgram`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("problem data contains non-finite values")]
    NonFinite,
    #[error("objective matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("equality matrix has rank {rank} < {rows} rows (or more rows than variables)")]
    RankDeficientEquality { rank: usize, rows: usize },
}

/// Nonzero pattern of one constraint row.
pub(crate) type SparseRow = Vec<(usize, f64)>;

/// Convex QP data `(Q, c, G, h, A, b)`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    q: DMatrix<f64>,
    c: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    g_rows: Vec<SparseRow>,
}

fn sparse_rows(m: &DMatrix<f64>) -> Vec<SparseRow> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .filter_map(|j| {
                    let v = m[(i, j)];
                    (v != 0.0).then_some((j, v))
                })
                .collect()
        })
        .collect()
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), QpError> {
    if expected != got {
        return Err(QpError::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

impl QuadraticProgram {
    /// Assembles and validates a QP. `Q` is symmetrized as `(Q + Q')/2`.
    pub fn new(
        q: DMatrix<f64>,
        c: DVector<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self, QpError> {
        let n = c.len();
        check_len("Q rows", n, q.nrows())?;
        check_len("Q cols", n, q.ncols())?;
        check_len("G cols", n, g.ncols())?;
        check_len("h", g.nrows(), h.len())?;
        check_len("A cols", n, a.ncols())?;
        check_len("b", a.nrows(), b.len())?;
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !(finite(&q) && finite(&g) && finite(&a))
            || !(c.iter().chain(h.iter()).chain(b.iter()).all(|v| v.is_finite()))
        {
            return Err(QpError::NonFinite);
        }

        let q = (&q + q.transpose()) * 0.5;
        let scale = q.amax().max(1.0);
        let mut shifted = q.clone();
        for i in 0..n {
            shifted[(i, i)] += 1e-8 * scale;
        }
        if n > 0 && Cholesky::new(shifted).is_none() {
            return Err(QpError::NotPositiveSemidefinite);
        }

        let p = a.nrows();
        if p > 0 {
            if p > n {
                return Err(QpError::RankDeficientEquality { rank: n, rows: p });
            }
            let sv = a.clone().svd(false, false).singular_values;
            let smax = sv.max();
            let rank = sv.iter().filter(|&&s| s > 1e-10 * smax.max(1.0)).count();
            if rank < p {
                return Err(QpError::RankDeficientEquality { rank, rows: p });
            }
        }

        let g_rows = sparse_rows(&g);
        Ok(Self {
            q,
            c,
            g,
            h,
            a,
            b,
            g_rows,
        })
    }

    /// QP with no constraints.
    pub fn unconstrained(q: DMatrix<f64>, c: DVector<f64>) -> Result<Self, QpError> {
        let n = c.len();
        Self::new(
            q,
            c,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.h.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.q * z)) + self.c.dot(z)
    }

    /// `G z`, using the row sparsity pattern.
    pub fn g_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.g_rows.len(),
            self.g_rows
                .iter()
                .map(|row| row.iter().map(|&(j, v)| v * z[j]).sum::<f64>()),
        )
    }

    /// `G' y`, using the row sparsity pattern.
    pub fn gt_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_vars());
        for (row, &yi) in self.g_rows.iter().zip(y.iter()) {
            if yi != 0.0 {
                for &(j, v) in row {
                    out[j] += v * yi;
                }
            }
        }
        out
    }

    /// Adds `sum_i w_i g_i g_i'` over the rows selected by `w` into `m`.
    pub(crate) fn add_gt_diag_g(&self, w: &[f64], m: &mut DMatrix<f64>) {
        for (row, &wi) in self.g_rows.iter().zip(w) {
            if wi == 0.0 {
                continue;
            }
            for &(j, vj) in row {
                for &(k, vk) in row {
                    m[(j, k)] += wi * vj * vk;
                }
            }
        }
    }

    pub(crate) fn g_row(&self, i: usize) -> &SparseRow {
        &self.g_rows[i]
    }

    /// Inequality slack `h - G z`.
    pub fn slack(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.h - self.g_mul(z)
    }
}

/// Interior-point options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on every KKT residual at termination.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Diagonal shift applied to the primal block (and negated on the dual block).
    pub regularization: f64,
    /// Refine converged iterates on the detected active set.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
            regularization: 1e-9,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

/// Primal-dual solution with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Inequality duals.
    pub lambda: DVector<f64>,
    /// Equality duals.
    pub nu: DVector<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Max-norms of the five KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualReport {
    pub stationarity: f64,
    pub primal_ineq: f64,
    pub primal_eq: f64,
    pub dual_neg: f64,
    pub complementarity: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_ineq)
            .max(self.primal_eq)
            .max(self.dual_neg)
            .max(self.complementarity)
    }
}

fn amax(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn kkt_residuals(qp: &QuadraticProgram, sol: &QpSolution) -> ResidualReport {
    kkt_residuals_at(qp, &sol.z, &sol.lambda, &sol.nu)
}

fn kkt_residuals_at(
    qp: &QuadraticProgram,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
    nu: &DVector<f64>,
) -> ResidualReport {
    let stat = &qp.q * z + &qp.c + qp.gt_mul(lambda) + qp.a.transpose() * nu;
    let gz_h = qp.g_mul(z) - &qp.h;
    let eq = &qp.a * z - &qp.b;
    ResidualReport {
        stationarity: amax(&stat),
        primal_ineq: gz_h.iter().fold(0.0_f64, |m, &v| m.max(v)),
        primal_eq: amax(&eq),
        dual_neg: lambda.iter().fold(0.0_f64, |m, &v| m.max(-v)),
        complementarity: lambda
            .iter()
            .zip(gz_h.iter())
            .fold(0.0_f64, |m, (l, r)| m.max((l * r).abs())),
    }
}

/// Reduced Newton system `[[H, A'], [A, -reg]]` via Cholesky of `H` and of
/// the Schur complement on the equality block.
struct NewtonSystem {
    h_chol: Cholesky<f64, Dyn>,
    at: DMatrix<f64>,
    h_inv_at: DMatrix<f64>,
    schur_chol: Option<Cholesky<f64, Dyn>>,
}

impl NewtonSystem {
    fn new(qp: &QuadraticProgram, w: &[f64], reg: f64) -> Option<Self> {
        let n = qp.num_vars();
        let mut h = qp.q.clone();
        qp.add_gt_diag_g(w, &mut h);
        for i in 0..n {
            h[(i, i)] += reg;
        }
        let h_chol = Cholesky::new(h)?;
        let at = qp.a.transpose();
        let (h_inv_at, schur_chol) = if qp.num_eq() > 0 {
            let h_inv_at = h_chol.solve(&at);
            let mut schur = &qp.a * &h_inv_at;
            for i in 0..schur.nrows() {
                schur[(i, i)] += reg;
            }
            (h_inv_at, Some(Cholesky::new(schur)?))
        } else {
            (DMatrix::zeros(n, 0), None)
        };
        Some(Self {
            h_chol,
            at,
            h_inv_at,
            schur_chol,
        })
    }

    /// Solves `H dz + A' dnu = r1`, `A dz = r2`.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let h_inv_r1 = self.h_chol.solve(r1);
        match &self.schur_chol {
            Some(schur) => {
                let rhs = self.at.tr_mul(&h_inv_r1) - r2;
                let dnu = schur.solve(&rhs);
                let dz = h_inv_r1 - &self.h_inv_at * &dnu;
                (dz, dnu)
            }
            None => (h_inv_r1, DVector::zeros(0)),
        }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .fold(1.0_f64, |a, (&x, &d)| a.min(-x / d))
}

fn initial_point(qp: &QuadraticProgram) -> DVector<f64> {
    let n = qp.num_vars();
    if qp.num_eq() == 0 {
        return DVector::zeros(n);
    }
    // minimum-norm least-squares solution of A z = b
    let aat = &qp.a * qp.a.transpose();
    match Cholesky::new(aat) {
        Some(ch) => qp.a.tr_mul(&ch.solve(&qp.b)),
        None => DVector::zeros(n),
    }
}

/// Solves a convex QP. Never panics on numerical trouble; failure is
/// reported through [`QpSolution::status`].
pub fn solve_qp(qp: &QuadraticProgram, opts: &SolverOptions) -> QpSolution {
    let n = qp.num_vars();
    let m = qp.num_ineq();
    let p = qp.num_eq();
    let reg = opts.regularization;

    let mut z = initial_point(qp);
    let mut s = DVector::from_element(m, 1.0);
    let mut lambda = DVector::from_element(m, 1.0);
    let mut nu = DVector::zeros(p);
    let at = qp.a.transpose();

    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    // IPM iterates below this bound are handed to the polisher / final check
    let inner_tol = opts.tolerance * 1e-2;

    for it in 0..opts.max_iterations {
        iterations = it;
        let r_dual = &qp.q * &z + &qp.c + qp.gt_mul(&lambda) + &at * &nu;
        let r_ineq = qp.g_mul(&z) + &s - &qp.h;
        let r_eq = &qp.a * &z - &qp.b;
        let mu = if m > 0 { s.dot(&lambda) / m as f64 } else { 0.0 };

        if !(mu.is_finite() && r_dual.iter().all(|v| v.is_finite())) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if amax(&r_dual) < inner_tol
            && amax(&r_ineq) < inner_tol
            && amax(&r_eq) < inner_tol
            && mu < inner_tol
        {
            status = SolveStatus::Optimal;
            break;
        }
        if m > 0 && lambda.amax() > 1e14 {
            status = SolveStatus::Infeasible;
            break;
        }

        let w: Vec<f64> = lambda.iter().zip(s.iter()).map(|(l, s)| l / s).collect();
        let Some(sys) = NewtonSystem::new(qp, &w, reg) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // Newton direction for complementarity target `s .* lambda = rc`.
        let direction = |rc: &DVector<f64>| {
            // dlambda = W G dz + S^{-1}(Lambda r_ineq - rc)
            let corr = DVector::from_iterator(
                m,
                (0..m).map(|i| (lambda[i] * r_ineq[i] - rc[i]) / s[i]),
            );
            let r1 = -&r_dual - qp.gt_mul(&corr);
            let r2 = -&r_eq;
            let (dz, dnu) = sys.solve(&r1, &r2);
            let gdz = qp.g_mul(&dz);
            let dlambda = DVector::from_iterator(m, (0..m).map(|i| w[i] * gdz[i] + corr[i]));
            let ds = -&r_ineq - gdz;
            (dz, ds, dlambda, dnu)
        };

        // predictor
        let rc_aff = s.component_mul(&lambda);
        let (dz_a, ds_a, dl_a, dnu_a) = direction(&rc_aff);
        let (dz, ds, dl, dnu) = if m > 0 {
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&lambda, &dl_a));
            let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&lambda + &dl_a * alpha_aff)) / m as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
            // corrector
            let rc = DVector::from_iterator(
                m,
                (0..m).map(|i| s[i] * lambda[i] + ds_a[i] * dl_a[i] - sigma * mu),
            );
            direction(&rc)
        } else {
            (dz_a, ds_a, dl_a, dnu_a)
        };

        let alpha = if m > 0 {
            (0.99 * max_step(&s, &ds).min(max_step(&lambda, &dl))).min(1.0)
        } else {
            1.0
        };
        z += &dz * alpha;
        s += &ds * alpha;
        lambda += &dl * alpha;
        nu += &dnu * alpha;
        iterations = it + 1;
        if n == 0 {
            status = SolveStatus::Optimal;
            break;
        }
    }

    let mut sol = QpSolution {
        z,
        lambda,
        nu,
        iterations,
        status,
        polished: false,
    };
    let finite = sol.z.iter().chain(sol.lambda.iter()).chain(sol.nu.iter()).all(|v| v.is_finite());
    if sol.status != SolveStatus::Infeasible && finite {
        if opts.polish {
            if let Some(polished) = polish(qp, &sol) {
                sol = polished;
            }
        }
        // a stalled iterate that already meets the contract is accepted
        let res = kkt_residuals(qp, &sol).max();
        sol.status = if res < opts.tolerance {
            SolveStatus::Optimal
        } else if sol.status == SolveStatus::Optimal {
            SolveStatus::NumericalFailure
        } else {
            sol.status
        };
    }
    sol
}

/// Solves the equality-constrained QP on the active set of `sol`. Returns
/// `None` when the active set is degenerate or the refined point is not an
/// improvement.
fn polish(qp: &QuadraticProgram, sol: &QpSolution) -> Option<QpSolution> {
    let n = qp.num_vars();
    let m = qp.num_ineq();
    let p = qp.num_eq();
    let slack = qp.slack(&sol.z);
    let active: Vec<usize> = (0..m).filter(|&i| sol.lambda[i] > slack[i]).collect();
    let k = active.len();
    let dim = n + k + p;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.q);
    for (r, &i) in active.iter().enumerate() {
        for &(j, v) in qp.g_row(i) {
            kkt[(n + r, j)] = v;
            kkt[(j, n + r)] = v;
        }
    }
    for r in 0..p {
        for j in 0..n {
            kkt[(n + k + r, j)] = qp.a[(r, j)];
            kkt[(j, n + k + r)] = qp.a[(r, j)];
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&qp.c));
    for (r, &i) in active.iter().enumerate() {
        rhs[n + r] = qp.h[i];
    }
    rhs.rows_mut(n + k, p).copy_from(&qp.b);

    let lu = kkt.clone().lu();
    // Dependent active rows (several constraints meeting at a kink) make the
    // system singular; the basic solution LU would pick is not a central dual
    // and would hand differentiation an artificially degenerate point.
    let pivots = lu.u().diagonal().map(f64::abs);
    if dim > 0 && pivots.min() <= 1e-12 * pivots.max() {
        return None;
    }
    let x = lu.solve(&rhs)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    // reject near-singular active sets
    let resid = amax(&(&kkt * &x - &rhs));
    if resid > 1e-9 * (1.0 + amax(&rhs)) {
        return None;
    }
    let z = x.rows(0, n).into_owned();
    let mut lambda = DVector::zeros(m);
    for (r, &i) in active.iter().enumerate() {
        if x[n + r] < 0.0 {
            return None;
        }
        lambda[i] = x[n + r];
    }
    let nu = x.rows(n + k, p).into_owned();
    let candidate = QpSolution {
        z,
        lambda,
        nu,
        iterations: sol.iterations,
        status: sol.status,
        polished: true,
    };
    let before = kkt_residuals(qp, sol).max();
    let after = kkt_residuals(qp, &candidate).max();
    (after <= before).then_some(candidate)
}

/// Solves each problem independently; output order matches input order.
pub fn solve_batch(qps: &[QuadraticProgram], opts: &SolverOptions) -> Vec<QpSolution> {
    qps.par_iter().map(|qp| solve_qp(qp, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_qp(q: f64, c: f64, g: Option<(f64, f64)>) -> QuadraticProgram {
        let (gm, hv) = match g {
            Some((gv, hv)) => (DMatrix::from_element(1, 1, gv), DVector::from_element(1, hv)),
            None => (DMatrix::zeros(0, 1), DVector::zeros(0)),
        };
        QuadraticProgram::new(
            DMatrix::from_element(1, 1, q),
            DVector::from_element(1, c),
            gm,
            hv,
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_scalar() {
        let qp = scalar_qp(1.0, 0.0, None);
        let sol = solve_qp(&qp, &SolverOptions::default());
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.z[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(qp.objective(&sol.z), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn active_upper_bound() {
        let qp = scalar_qp(1.0, -1.0, Some((1.0, 0.0)));
        let sol = solve_qp(&qp, &SolverOptions::default());
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.z[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.lambda[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn residuals_of_exact_optimum_vanish() {
        let qp = scalar_qp(1.0, -1.0, Some((1.0, 0.0)));
        let exact = QpSolution {
            z: DVector::from_element(1, 0.0),
            lambda: DVector::from_element(1, 1.0),
            nu: DVector::zeros(0),
            iterations: 0,
            status: SolveStatus::Optimal,
            polished: false,
        };
        assert_eq!(kkt_residuals(&qp, &exact).max(), 0.0);

        let perturbed = QpSolution {
            z: DVector::from_element(1, 1e-3),
            ..exact
        };
        let r = kkt_residuals(&qp, &perturbed);
        assert!(r.stationarity > 0.5e-3 && r.stationarity < 2e-3);
    }

    #[test]
    fn equality_constrained() {
        // min 1/2 |z|^2 s.t. z0 + z1 = 1
        let qp = QuadraticProgram::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let sol = solve_qp(&qp, &SolverOptions::default());
        assert!(sol.is_optimal());
        assert_abs_diff_eq!(sol.z[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.z[1], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.nu[0], -0.5, epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_data() {
        let bad_q = QuadraticProgram::unconstrained(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DVector::zeros(2),
        );
        assert_eq!(bad_q.unwrap_err(), QpError::NotPositiveSemidefinite);

        let rank_def = QuadraticProgram::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            DVector::from_element(2, 1.0),
        );
        assert!(matches!(
            rank_def.unwrap_err(),
            QpError::RankDeficientEquality { rank: 1, rows: 2 }
        ));

        let mismatch = QuadraticProgram::unconstrained(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(
            mismatch.unwrap_err(),
            QpError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn q_is_symmetrized() {
        let qp = QuadraticProgram::unconstrained(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]),
            DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(qp.q()[(0, 1)], 0.5);
        assert_eq!(qp.q()[(1, 0)], 0.5);
    }

    #[test]
    fn infeasible_is_reported() {
        // z <= -1 and -z <= -1
        let qp = QuadraticProgram::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_row_slice(&[-1.0, -1.0]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        let sol = solve_qp(&qp, &SolverOptions::default());
        assert!(!sol.is_optimal());
    }

    #[test]
    fn empty_batch() {
        assert!(solve_batch(&[], &SolverOptions::default()).is_empty());
    }
}
