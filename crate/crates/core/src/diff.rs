//! Differentiation of the QP argmin through its KKT conditions.
//!
//! At a primal-dual optimum `(z, lambda, nu)` the implicit function theorem
//! applied to stationarity, complementary slackness and primal equality gives
//!
//! ```text
//!     [ Q            G'          A' ] [dz     ]   [ -(dQ z + dc + dG' lambda + dA' nu) ]
//!     [ D(lambda) G  D(G z - h)  0  ] [dlambda] = [ -D(lambda)(dG z - dh)              ]
//!     [ A            0           0  ] [dnu    ]   [ -(dA z - db)                       ]
//! ```
//!
//! The matrix is not factored as written. Rows of clearly inactive
//! constraints (slack at least the dual) are eliminated and rows of active
//! constraints are scaled by `1/lambda`, which yields a symmetric system in
//! `(dz, dlambda_active, dnu)` whose conditioning does not degrade as
//! slacks or duals approach zero. The same factor serves the forward
//! (tangent) solve and the transposed (adjoint) solve.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use thiserror::Error;

use crate::qp::{QpSolution, QuadraticProgram, SolveStatus};

/// Smallest admissible `max(lambda_i, slack_i)`.
pub const COMPLEMENTARITY_MARGIN: f64 = 1e-10;
const KKT_REGULARIZATION: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("solution status is {0:?}, not optimal")]
    NotOptimal(SolveStatus),
    #[error("degenerate solution: constraint {row} has complementarity margin {margin:e}")]
    DegenerateSolution { row: usize, margin: f64 },
    #[error("differentiation KKT matrix is singular")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Gradients of a scalar loss with respect to each QP datum. Also used as a
/// tangent direction for forward mode (see [`QpDirection`]).
#[derive(Debug, Clone, PartialEq)]
pub struct QpGradients {
    pub dq: DMatrix<f64>,
    pub dc: DVector<f64>,
    pub dg: DMatrix<f64>,
    pub dh: DVector<f64>,
    pub da: DMatrix<f64>,
    pub db: DVector<f64>,
}

/// Directional derivative of the QP data along one parameter.
pub type QpDirection = QpGradients;

impl QpGradients {
    pub fn zeros_like(qp: &QuadraticProgram) -> Self {
        let (n, m, p) = (qp.num_vars(), qp.num_ineq(), qp.num_eq());
        Self {
            dq: DMatrix::zeros(n, n),
            dc: DVector::zeros(n),
            dg: DMatrix::zeros(m, n),
            dh: DVector::zeros(m),
            da: DMatrix::zeros(p, n),
            db: DVector::zeros(p),
        }
    }

    /// Sum of elementwise products over all six blocks.
    pub fn inner(&self, other: &Self) -> f64 {
        self.dq.dot(&other.dq)
            + self.dc.dot(&other.dc)
            + self.dg.dot(&other.dg)
            + self.dh.dot(&other.dh)
            + self.da.dot(&other.da)
            + self.db.dot(&other.db)
    }
}

/// Reusable factorization of the differentiation KKT system at one optimum.
#[derive(Debug, Clone)]
pub struct KktFactorization {
    n: usize,
    p: usize,
    z: DVector<f64>,
    lambda: DVector<f64>,
    nu: DVector<f64>,
    slack: DVector<f64>,
    /// Position of each active row inside the reduced system.
    active_pos: Vec<Option<usize>>,
    num_active: usize,
    lu: LU<f64, Dyn, Dyn>,
}

/// The differentiation matrix exactly as written above, unreduced. Intended
/// for inspection and tests; the solvers use [`factorize_kkt`].
pub fn kkt_matrix(qp: &QuadraticProgram, sol: &QpSolution) -> DMatrix<f64> {
    let (n, m, p) = (qp.num_vars(), qp.num_ineq(), qp.num_eq());
    let gz_h = qp.g_mul(&sol.z) - qp.h();
    let mut k = DMatrix::zeros(n + m + p, n + m + p);
    k.view_mut((0, 0), (n, n)).copy_from(qp.q());
    k.view_mut((0, n), (n, m)).copy_from(&qp.g().transpose());
    k.view_mut((0, n + m), (n, p)).copy_from(&qp.a().transpose());
    for i in 0..m {
        for j in 0..n {
            k[(n + i, j)] = sol.lambda[i] * qp.g()[(i, j)];
        }
        k[(n + i, n + i)] = gz_h[i];
    }
    k.view_mut((n + m, 0), (p, n)).copy_from(qp.a());
    k
}

pub fn factorize_kkt(
    qp: &QuadraticProgram,
    sol: &QpSolution,
) -> Result<KktFactorization, DiffError> {
    if sol.status != SolveStatus::Optimal {
        return Err(DiffError::NotOptimal(sol.status));
    }
    let (n, m, p) = (qp.num_vars(), qp.num_ineq(), qp.num_eq());
    let slack = qp.slack(&sol.z).map(|s| s.max(0.0));
    let lambda = sol.lambda.map(|l| l.max(0.0));

    let mut active_pos = vec![None; m];
    let mut num_active = 0;
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let margin = lambda[i].max(slack[i]);
        if margin <= COMPLEMENTARITY_MARGIN {
            return Err(DiffError::DegenerateSolution { row: i, margin });
        }
        if lambda[i] > slack[i] {
            active_pos[i] = Some(num_active);
            num_active += 1;
        } else {
            weights[i] = lambda[i] / slack[i];
        }
    }

    let dim = n + num_active + p;
    let mut mat = DMatrix::zeros(dim, dim);
    mat.view_mut((0, 0), (n, n)).copy_from(qp.q());
    qp.add_gt_diag_g(&weights, &mut mat);
    for i in 0..m {
        if let Some(r) = active_pos[i] {
            for &(j, v) in qp.g_row(i) {
                mat[(n + r, j)] = v;
                mat[(j, n + r)] = v;
            }
            mat[(n + r, n + r)] = -slack[i] / lambda[i];
        }
    }
    for r in 0..p {
        for j in 0..n {
            let v = qp.a()[(r, j)];
            mat[(n + num_active + r, j)] = v;
            mat[(j, n + num_active + r)] = v;
        }
    }

    let mut lu = mat.clone().lu();
    if !lu.is_invertible() {
        for i in 0..dim {
            mat[(i, i)] += if i < n { KKT_REGULARIZATION } else { -KKT_REGULARIZATION };
        }
        lu = mat.lu();
        if !lu.is_invertible() {
            return Err(DiffError::Singular);
        }
    }

    Ok(KktFactorization {
        n,
        p,
        z: sol.z.clone(),
        lambda,
        nu: sol.nu.clone(),
        slack,
        active_pos,
        num_active,
        lu,
    })
}

impl KktFactorization {
    fn m(&self) -> usize {
        self.lambda.len()
    }

    fn solve_reduced(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, DiffError> {
        let x = self.lu.solve(rhs).ok_or(DiffError::Singular)?;
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(DiffError::Singular)
        }
    }

    /// Solves `K x = r` for the unreduced matrix `K`.
    pub fn solve(
        &self,
        qp: &QuadraticProgram,
        r_z: &DVector<f64>,
        r_lambda: &DVector<f64>,
        r_nu: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), DiffError> {
        let (n, m, p, k) = (self.n, self.m(), self.p, self.num_active);
        let mut rhs = DVector::zeros(n + k + p);
        rhs.rows_mut(0, n).copy_from(r_z);
        for i in 0..m {
            match self.active_pos[i] {
                Some(r) => rhs[n + r] = r_lambda[i] / self.lambda[i],
                None => {
                    let coef = r_lambda[i] / self.slack[i];
                    for &(j, v) in qp.g_row(i) {
                        rhs[j] += v * coef;
                    }
                }
            }
        }
        rhs.rows_mut(n + k, p).copy_from(r_nu);
        let x = self.solve_reduced(&rhs)?;
        let dz = x.rows(0, n).into_owned();
        let mut dlambda = DVector::zeros(m);
        for i in 0..m {
            dlambda[i] = match self.active_pos[i] {
                Some(r) => x[n + r],
                None => {
                    let gdz: f64 = qp.g_row(i).iter().map(|&(j, v)| v * dz[j]).sum();
                    (self.lambda[i] * gdz - r_lambda[i]) / self.slack[i]
                }
            };
        }
        let dnu = x.rows(n + k, p).into_owned();
        Ok((dz, dlambda, dnu))
    }

    /// Solves `K' x = r` for the unreduced matrix `K`.
    pub fn solve_transpose(
        &self,
        qp: &QuadraticProgram,
        r_z: &DVector<f64>,
        r_lambda: &DVector<f64>,
        r_nu: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), DiffError> {
        let (n, m, p, k) = (self.n, self.m(), self.p, self.num_active);
        let mut rhs = DVector::zeros(n + k + p);
        rhs.rows_mut(0, n).copy_from(r_z);
        for i in 0..m {
            match self.active_pos[i] {
                Some(r) => rhs[n + r] = r_lambda[i],
                None => {
                    let coef = self.lambda[i] * r_lambda[i] / self.slack[i];
                    for &(j, v) in qp.g_row(i) {
                        rhs[j] += v * coef;
                    }
                }
            }
        }
        rhs.rows_mut(n + k, p).copy_from(r_nu);
        let x = self.solve_reduced(&rhs)?;
        let dz = x.rows(0, n).into_owned();
        let mut dlambda = DVector::zeros(m);
        for i in 0..m {
            dlambda[i] = match self.active_pos[i] {
                Some(r) => x[n + r] / self.lambda[i],
                None => {
                    let gdz: f64 = qp.g_row(i).iter().map(|&(j, v)| v * dz[j]).sum();
                    (gdz - r_lambda[i]) / self.slack[i]
                }
            };
        }
        let dnu = x.rows(n + k, p).into_owned();
        Ok((dz, dlambda, dnu))
    }
}

/// Reverse mode: gradients of `L` with respect to `(Q, c, G, h, A, b)` given
/// `dL/dz` at the solution.
pub fn backward(
    qp: &QuadraticProgram,
    fact: &KktFactorization,
    dl_dz: &DVector<f64>,
) -> Result<QpGradients, DiffError> {
    let (n, m, p) = (qp.num_vars(), qp.num_ineq(), qp.num_eq());
    if dl_dz.len() != n {
        return Err(DiffError::DimensionMismatch {
            expected: n,
            got: dl_dz.len(),
        });
    }
    let (d_z, d_lambda, d_nu) =
        fact.solve_transpose(qp, &(-dl_dz), &DVector::zeros(m), &DVector::zeros(p))?;
    let z = &fact.z;
    let lambda = &fact.lambda;
    let nu = &fact.nu;

    let outer = &d_z * z.transpose();
    let dq = (&outer + outer.transpose()) * 0.5;
    let lam_dlam = lambda.component_mul(&d_lambda);
    let dg = &lam_dlam * z.transpose() + lambda * d_z.transpose();
    let dh = -&lam_dlam;
    let da = &d_nu * z.transpose() + nu * d_z.transpose();
    let db = -&d_nu;
    Ok(QpGradients {
        dq,
        dc: d_z,
        dg,
        dh,
        da,
        db,
    })
}

/// Forward mode: `dz*/dt` for data moving along `dir`.
pub fn jacobian_dz_dtheta(
    qp: &QuadraticProgram,
    fact: &KktFactorization,
    dir: &QpDirection,
) -> Result<DVector<f64>, DiffError> {
    let z = &fact.z;
    let r_z = -(&dir.dq * z + &dir.dc + dir.dg.tr_mul(&fact.lambda) + dir.da.tr_mul(&fact.nu));
    let r_lambda = -(fact
        .lambda
        .component_mul(&(&dir.dg * z - &dir.dh)));
    let r_nu = -(&dir.da * z - &dir.db);
    let (dz, _, _) = fact.solve(qp, &r_z, &r_lambda, &r_nu)?;
    Ok(dz)
}

/// Factorizes and runs the reverse pass in one call.
pub fn solve_backward(
    qp: &QuadraticProgram,
    sol: &QpSolution,
    dl_dz: &DVector<f64>,
) -> Result<QpGradients, DiffError> {
    let fact = factorize_kkt(qp, sol)?;
    backward(qp, &fact, dl_dz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve_qp, SolverOptions};
    use approx::assert_abs_diff_eq;

    fn active_example() -> (QuadraticProgram, QpSolution) {
        let qp = QuadraticProgram::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        let sol = solve_qp(&qp, &SolverOptions::default());
        (qp, sol)
    }

    #[test]
    fn unconstrained_gradient() {
        let qp = QuadraticProgram::unconstrained(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        let sol = solve_qp(&qp, &SolverOptions::default());
        let fact = factorize_kkt(&qp, &sol).unwrap();
        let grads = backward(&qp, &fact, &DVector::from_element(1, 1.0)).unwrap();
        assert_abs_diff_eq!(grads.dc[0], -0.5, epsilon = 1e-12);

        let mut dir = QpGradients::zeros_like(&qp);
        dir.dc[0] = 1.0;
        let dz = jacobian_dz_dtheta(&qp, &fact, &dir).unwrap();
        assert_abs_diff_eq!(dz[0], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn active_constraint_matrix_and_gradient() {
        let (qp, sol) = active_example();
        let k = kkt_matrix(&qp, &sol);
        assert_abs_diff_eq!(k[(0, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k[(0, 1)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k[(1, 0)], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(k[(1, 1)], 0.0, epsilon = 1e-9);

        let grads = solve_backward(&qp, &sol, &DVector::from_element(1, 1.0)).unwrap();
        assert_abs_diff_eq!(grads.dh[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(grads.dc[0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_non_optimal() {
        let (qp, mut sol) = active_example();
        sol.status = SolveStatus::MaxIterations;
        assert!(matches!(
            factorize_kkt(&qp, &sol),
            Err(DiffError::NotOptimal(_))
        ));
    }

    #[test]
    fn rejects_weakly_active_constraint() {
        // min 1/2 z^2 s.t. z <= 0: optimum z = 0 with zero dual
        let qp = QuadraticProgram::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        let sol = QpSolution {
            z: DVector::from_element(1, 0.0),
            lambda: DVector::from_element(1, 0.0),
            nu: DVector::zeros(0),
            iterations: 0,
            status: SolveStatus::Optimal,
            polished: true,
        };
        assert!(matches!(
            factorize_kkt(&qp, &sol),
            Err(DiffError::DegenerateSolution { row: 0, .. })
        ));
    }

    #[test]
    fn length_mismatch() {
        let (qp, sol) = active_example();
        let err = solve_backward(&qp, &sol, &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, DiffError::DimensionMismatch { .. }));
    }
}
