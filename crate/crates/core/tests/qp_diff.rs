mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use taskbased::diff::{backward, factorize_kkt, jacobian_dz_dtheta, kkt_matrix, QpGradients};
use taskbased::gradcheck::{check, finite_diff, flatten_grads, flatten_qp, tight_solver, unflatten_qp};
use taskbased::qp::{kkt_residuals, solve_batch, solve_qp, QuadraticProgram, SolverOptions};
use taskbased::random::{normal_matrix, normal_vector, random_feasible_qp, rng};

#[test]
fn random_qps_meet_residual_contract() {
    let mut r = rng(11);
    for _ in 0..30 {
        let qp = random_feasible_qp(&mut r, 10, 15, 3);
        let sol = solve_qp(&qp, &SolverOptions::default());
        assert!(sol.is_optimal(), "{:?}", sol.status);
        let res = kkt_residuals(&qp, &sol);
        assert!(res.max() < 1e-8, "{res:?}");
        assert!(sol.lambda.iter().all(|&l| l >= -1e-8));
    }
}

#[test]
fn batch_matches_sequential_bitwise() {
    let mut r = rng(5);
    let qps: Vec<_> = (0..64).map(|_| random_feasible_qp(&mut r, 6, 9, 2)).collect();
    let opts = SolverOptions::default();
    let batch = solve_batch(&qps, &opts);
    for (qp, b) in qps.iter().zip(&batch) {
        assert_eq!(&solve_qp(qp, &opts), b);
    }
}

#[test]
fn removing_a_constraint_never_raises_the_optimum() {
    let mut r = rng(21);
    for _ in 0..20 {
        let qp = random_feasible_qp(&mut r, 5, 8, 1);
        let full = solve_qp(&qp, &SolverOptions::default());
        let drop = r.gen_range(0..8);
        let keep: Vec<usize> = (0..8).filter(|&i| i != drop).collect();
        let g = qp.g().select_rows(&keep);
        let h = qp.h().select_rows(&keep);
        let relaxed = QuadraticProgram::new(
            qp.q().clone(),
            qp.c().clone(),
            g,
            h,
            qp.a().clone(),
            qp.b().clone(),
        )
        .unwrap();
        let sol = solve_qp(&relaxed, &SolverOptions::default());
        assert!(relaxed.objective(&sol.z) <= qp.objective(&full.z) + 1e-9);
    }
}

#[test]
fn objective_scaling_leaves_argmin_and_scales_duals() {
    let mut r = rng(3);
    for _ in 0..10 {
        let qp = random_feasible_qp(&mut r, 6, 8, 2);
        let s = 3.7;
        let scaled = QuadraticProgram::new(
            qp.q() * s,
            qp.c() * s,
            qp.g().clone(),
            qp.h().clone(),
            qp.a().clone(),
            qp.b().clone(),
        )
        .unwrap();
        let a = solve_qp(&qp, &SolverOptions::default());
        let b = solve_qp(&scaled, &SolverOptions::default());
        assert!((&a.z - &b.z).amax() < 1e-6);
        assert!((&a.lambda * s - &b.lambda).amax() < 1e-6 * s);
        assert!((&a.nu * s - &b.nu).amax() < 1e-6 * s);
    }
}

#[test]
fn small_problems_match_oracles() {
    let mut r = rng(99);
    for _ in 0..25 {
        let n = r.gen_range(1..=3);
        let m = r.gen_range(0..=4);
        let p = r.gen_range(0..n.min(2));
        let qp = random_feasible_qp(&mut r, n, m, p);
        let sol = solve_qp(&qp, &SolverOptions::default());
        let exact = common::active_set_oracle(&qp);
        let pg = common::projected_gradient_oracle(&qp, 100_000);
        assert!((&sol.z - &exact).amax() < 1e-8);
        assert!((&sol.z - &pg).amax() < 1e-4, "{} vs {}", sol.z, pg);
    }
}

#[test]
fn factorization_solves_match_dense_inverse() {
    let mut r = rng(8);
    for _ in 0..10 {
        let qp = random_feasible_qp(&mut r, 5, 7, 1);
        let sol = solve_qp(&qp, &tight_solver());
        let fact = factorize_kkt(&qp, &sol).unwrap();
        let k = kkt_matrix(&qp, &sol);
        let dim = k.nrows();
        let rhs = normal_vector(&mut r, dim);
        let dense = k.clone().lu().solve(&rhs).unwrap();
        let dense_t = k.transpose().lu().solve(&rhs).unwrap();
        let split = |v: &DVector<f64>| (v.rows(0, 5).into_owned(), v.rows(5, 7).into_owned(), v.rows(12, 1).into_owned());
        let (a, b, c) = split(&rhs);
        let (x, y, w) = fact.solve(&qp, &a, &b, &c).unwrap();
        let (xt, yt, wt) = fact.solve_transpose(&qp, &a, &b, &c).unwrap();
        let ours = DVector::from_iterator(dim, x.iter().chain(y.iter()).chain(w.iter()).copied());
        let ours_t = DVector::from_iterator(dim, xt.iter().chain(yt.iter()).chain(wt.iter()).copied());
        let scale = dense.amax().max(1.0);
        assert!((&ours - &dense).amax() < 1e-10 * scale, "{}", (&ours - &dense).amax());
        let scale_t = dense_t.amax().max(1.0);
        assert!((&ours_t - &dense_t).amax() < 1e-10 * scale_t);
    }
}

#[test]
fn backward_matches_finite_differences() {
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let qp = random_feasible_qp(&mut r, 8, 10, 2);
        let w = normal_vector(&mut r, 8);
        let opts = tight_solver();
        let sol = solve_qp(&qp, &opts);
        let grads = backward(&qp, &factorize_kkt(&qp, &sol).unwrap(), &w).unwrap();
        let theta = flatten_qp(&qp);
        let numeric = finite_diff(
            |t| {
                let perturbed = unflatten_qp(&qp, t).unwrap();
                w.dot(&solve_qp(&perturbed, &opts).z)
            },
            &theta,
            1e-5,
        )
        .unwrap();
        let report = check(&flatten_grads(&grads), &numeric, 1e-4, 1e-7);
        assert!(report.passed, "seed {seed}: {report:?}");
    }
}

#[test]
fn forward_and_reverse_modes_are_adjoint() {
    for seed in 0..20 {
        let mut r = rng(2000 + seed);
        let qp = random_feasible_qp(&mut r, 7, 9, 2);
        let sol = solve_qp(&qp, &tight_solver());
        let fact = factorize_kkt(&qp, &sol).unwrap();
        let w = normal_vector(&mut r, 7);
        let dir = QpGradients {
            dq: {
                let m = normal_matrix(&mut r, 7, 7);
                (&m + m.transpose()) * 0.5
            },
            dc: normal_vector(&mut r, 7),
            dg: normal_matrix(&mut r, 9, 7),
            dh: normal_vector(&mut r, 9),
            da: normal_matrix(&mut r, 2, 7),
            db: normal_vector(&mut r, 2),
        };
        let jvp = jacobian_dz_dtheta(&qp, &fact, &dir).unwrap();
        let vjp = backward(&qp, &fact, &w).unwrap();
        let lhs = w.dot(&jvp);
        let rhs = vjp.inner(&dir);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn inactive_rows_get_exactly_zero_gradient() {
    let mut r = rng(77);
    let mut seen_inactive = 0;
    for _ in 0..10 {
        let qp = random_feasible_qp(&mut r, 6, 10, 1);
        let sol = solve_qp(&qp, &tight_solver());
        assert!(sol.polished);
        let grads = backward(&qp, &factorize_kkt(&qp, &sol).unwrap(), &normal_vector(&mut r, 6)).unwrap();
        let slack = qp.slack(&sol.z);
        for i in 0..10 {
            if slack[i] > 1e-6 {
                seen_inactive += 1;
                assert_eq!(grads.dh[i], 0.0);
                assert!(grads.dg.row(i).iter().all(|&v| v == 0.0));
            }
        }
        assert_eq!(grads.dq, grads.dq.transpose());
    }
    assert!(seen_inactive > 0);
}

#[test]
fn unconstrained_jacobian_is_negative_inverse() {
    let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let qp = QuadraticProgram::unconstrained(q.clone(), DVector::from_row_slice(&[1.0, -1.0])).unwrap();
    let sol = solve_qp(&qp, &SolverOptions::default());
    let fact = factorize_kkt(&qp, &sol).unwrap();
    let inv = q.try_inverse().unwrap();
    for j in 0..2 {
        let mut dir = QpGradients::zeros_like(&qp);
        dir.dc[j] = 1.0;
        let col = jacobian_dz_dtheta(&qp, &fact, &dir).unwrap();
        for i in 0..2 {
            assert!((col[i] + inv[(i, j)]).abs() < 1e-12);
        }
    }
}
