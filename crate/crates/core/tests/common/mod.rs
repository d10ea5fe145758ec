#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use taskbased::qp::QuadraticProgram;

/// Accelerated projected gradient ascent on the QP dual
/// `max_{lambda >= 0, nu} -1/2 r' Q^{-1} r - h' lambda - b' nu`, `r = c + G' lambda + A' nu`.
/// Requires `Q` positive definite. Returns the primal point `-Q^{-1} r`.
pub fn projected_gradient_oracle(qp: &QuadraticProgram, iterations: usize) -> DVector<f64> {
    let n = qp.num_vars();
    let (m, p) = (qp.num_ineq(), qp.num_eq());
    let q_inv = qp.q().clone().try_inverse().expect("oracle needs positive definite Q");
    let mut stacked = DMatrix::zeros(m + p, n);
    stacked.view_mut((0, 0), (m, n)).copy_from(qp.g());
    stacked.view_mut((m, 0), (p, n)).copy_from(qp.a());
    if m + p == 0 {
        return -(&q_inv * qp.c());
    }
    let hess = &stacked * &q_inv * stacked.transpose();
    let lip = hess.symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lip;
    let mut rhs = DVector::zeros(m + p);
    rhs.rows_mut(0, m).copy_from(qp.h());
    rhs.rows_mut(m, p).copy_from(qp.b());
    let primal = |y: &DVector<f64>| -(&q_inv * (qp.c() + stacked.tr_mul(y)));

    let project = |y: &mut DVector<f64>| {
        for i in 0..m {
            y[i] = y[i].max(0.0);
        }
    };
    let mut y = DVector::zeros(m + p);
    let mut y_prev = y.clone();
    let mut t = 1.0_f64;
    for _ in 0..iterations {
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        let look = &y + (&y - &y_prev) * momentum;
        // dual gradient: G z(y) - h, A z(y) - b
        let grad = &stacked * primal(&look) - &rhs;
        let mut next = look + grad * step;
        project(&mut next);
        y_prev = std::mem::replace(&mut y, next);
        t = t_next;
    }
    primal(&y)
}

/// Exact optimum by enumerating candidate active sets (small `m` only).
pub fn active_set_oracle(qp: &QuadraticProgram) -> DVector<f64> {
    let n = qp.num_vars();
    let (m, p) = (qp.num_ineq(), qp.num_eq());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = rows.len();
        let dim = n + k + p;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(qp.q());
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-qp.c()));
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = qp.g()[(i, j)];
                kkt[(j, n + r)] = qp.g()[(i, j)];
            }
            rhs[n + r] = qp.h()[i];
        }
        for r in 0..p {
            for j in 0..n {
                kkt[(n + k + r, j)] = qp.a()[(r, j)];
                kkt[(j, n + k + r)] = qp.a()[(r, j)];
            }
            rhs[n + k + r] = qp.b()[r];
        }
        let Some(x) = kkt.lu().solve(&rhs) else { continue };
        let z = x.rows(0, n).into_owned();
        let feasible = (qp.g() * &z - qp.h()).iter().all(|&v| v <= 1e-9);
        let duals_ok = (0..k).all(|r| x[n + r] >= -1e-9);
        if feasible && duals_ok {
            let obj = qp.objective(&z);
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, z));
            }
        }
    }
    best.expect("feasible QP has an optimal active set").1
}
