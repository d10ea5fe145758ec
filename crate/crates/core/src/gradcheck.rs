//! Central finite-difference oracle for analytic gradients.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::diff::QpGradients;
use crate::qp::{QpError, QuadraticProgram, SolverOptions};

mod suites;
pub use suites::{run_suites, CaseResult, Scope, SuiteOptions, SuiteOutcome, SuiteSummary};

/// Default relative perturbation.
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_RTOL: f64 = 1e-4;
pub const DEFAULT_ATOL: f64 = 1e-7;
/// Relative tolerance for paths that re-run an iterative solver per
/// perturbation.
pub const RESOLVE_RTOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradCheckError {
    #[error("function value is not finite at coordinate {index}")]
    NonFinite { index: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Coordinate that fails worst relative to the tolerances.
    pub worst_index: usize,
    pub passed: bool,
    pub step: f64,
}

/// Central differences `(f(x + h_i e_i) - f(x - h_i e_i)) / 2 h_i` with
/// `h_i = step * max(1, |x_i|)`.
pub fn finite_diff<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>, GradCheckError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut point = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step * x[i].abs().max(1.0);
            point[i] = x[i] + h;
            let plus = f(&point);
            point[i] = x[i] - h;
            let minus = f(&point);
            point[i] = x[i];
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(GradCheckError::NonFinite { index: i });
            }
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Finite differences restricted to the coordinates in `indices`.
pub fn finite_diff_subset<F>(
    mut f: F,
    x: &[f64],
    indices: &[usize],
    step: f64,
) -> Result<Vec<f64>, GradCheckError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut point = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            let h = step * x[i].abs().max(1.0);
            point[i] = x[i] + h;
            let plus = f(&point);
            point[i] = x[i] - h;
            let minus = f(&point);
            point[i] = x[i];
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(GradCheckError::NonFinite { index: i });
            }
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// Coordinate-wise comparison; a coordinate passes when its relative error
/// is below `rtol` or its absolute error is below `atol`.
pub fn check(analytic: &[f64], numeric: &[f64], rtol: f64, atol: f64) -> GradCheckReport {
    assert_eq!(
        analytic.len(),
        numeric.len(),
        "gradient lengths differ"
    );
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: 0,
        passed: true,
        step: DEFAULT_STEP,
    };
    let mut worst = f64::NEG_INFINITY;
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let denom = a.abs().max(n.abs());
        let rel = if denom > 0.0 { abs / denom } else { 0.0 };
        if !(abs.is_finite()) {
            report.passed = false;
        }
        report.max_abs_err = report.max_abs_err.max(abs);
        report.max_rel_err = report.max_rel_err.max(rel);
        let badness = (rel / rtol).min(abs / atol);
        if badness > worst || badness.is_nan() {
            worst = badness;
            report.worst_index = i;
        }
        if !(rel < rtol || abs < atol) {
            report.passed = false;
        }
    }
    report
}

/// Flattens QP data as `[vec(Q), c, vec(G), h, vec(A), b]` (column-major).
pub fn flatten_qp(qp: &QuadraticProgram) -> Vec<f64> {
    qp.q()
        .iter()
        .chain(qp.c().iter())
        .chain(qp.g().iter())
        .chain(qp.h().iter())
        .chain(qp.a().iter())
        .chain(qp.b().iter())
        .copied()
        .collect()
}

/// Inverse of [`flatten_qp`] for the dimensions of `like`.
pub fn unflatten_qp(like: &QuadraticProgram, theta: &[f64]) -> Result<QuadraticProgram, QpError> {
    let (n, m, p) = (like.num_vars(), like.num_ineq(), like.num_eq());
    let mut off = 0;
    let mut take = |len: usize| {
        let s = &theta[off..off + len];
        off += len;
        s
    };
    let q = DMatrix::from_column_slice(n, n, take(n * n));
    let c = DVector::from_column_slice(take(n));
    let g = DMatrix::from_column_slice(m, n, take(m * n));
    let h = DVector::from_column_slice(take(m));
    let a = DMatrix::from_column_slice(p, n, take(p * n));
    let b = DVector::from_column_slice(take(p));
    QuadraticProgram::new(q, c, g, h, a, b)
}

/// Flattens gradients in the same order as [`flatten_qp`].
pub fn flatten_grads(g: &QpGradients) -> Vec<f64> {
    g.dq.iter()
        .chain(g.dc.iter())
        .chain(g.dg.iter())
        .chain(g.dh.iter())
        .chain(g.da.iter())
        .chain(g.db.iter())
        .copied()
        .collect()
}

/// Solver settings used when the solution itself is being differenced.
pub fn tight_solver() -> SolverOptions {
    SolverOptions {
        tolerance: 1e-10,
        max_iterations: 200,
        ..SolverOptions::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn half_squared_norm() {
        let g = finite_diff(|x| 0.5 * (x[0] * x[0] + x[1] * x[1]), &[1.0, 2.0], 1e-5).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn linear_is_exact() {
        for step in [1e-2, 1e-5, 1.0] {
            let g = finite_diff(|x| 3.0 * x[0] - 2.0 * x[1], &[0.3, -0.7], step).unwrap();
            assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-10);
            assert_abs_diff_eq!(g[1], -2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn cubic_truncation_term() {
        let h = 1e-3;
        let g = finite_diff(|x| x[0].powi(3), &[1.0], h).unwrap();
        assert_abs_diff_eq!(g[0], 3.0 + h * h, epsilon = 1e-10);
    }

    #[test]
    fn non_finite_is_an_error() {
        let err = finite_diff(|x| 1.0 / x[0], &[0.0], 0.0).unwrap_err();
        assert_eq!(err, GradCheckError::NonFinite { index: 0 });
    }

    #[test]
    fn check_rules() {
        let a = [1.0, -2.0, 0.5];
        let identical = check(&a, &a, 1e-4, 1e-7);
        assert!(identical.passed);
        assert_eq!(identical.max_abs_err, 0.0);
        assert_eq!(identical.max_rel_err, 0.0);

        let scaled: Vec<f64> = a.iter().map(|v| v * (1.0 + 2e-4)).collect();
        let off = check(&scaled, &a, 1e-4, 1e-7);
        assert!(!off.passed);
        assert!((off.max_rel_err - 2e-4).abs() < 1e-6);

        let zeros = check(&[0.0, 0.0], &[0.0, 0.0], 1e-4, 1e-7);
        assert!(zeros.passed);
    }

    #[test]
    fn worst_index_points_at_failure() {
        let r = check(&[1.0, 2.0, 3.0], &[1.0, 2.1, 3.0], 1e-4, 1e-7);
        assert!(!r.passed);
        assert_eq!(r.worst_index, 1);
    }
}
