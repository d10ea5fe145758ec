//! Conditional newsvendor with discrete demand levels.
//!
//! Given probabilities `p` over demand levels `d`, the expected stocking cost
//! is minimized by the two-stage QP over `[z, z_b, z_h]` where `z` is the
//! order and `z_b`, `z_h` are per-level shortage and surplus amounts.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, WeightedIndex};

use crate::diff::{backward, factorize_kkt, kkt_matrix, QpDirection, QpGradients};
use crate::models::{softmax_rows, FitTargets, Gradients, Mode, PredictiveModel};
use crate::qp::{QpSolution, QuadraticProgram, SolverOptions};
use crate::random::{mix_seed, normal_matrix, rng};
use crate::task::{solve_checked, Dataset, FeasibleSet, Proxy, Task, TaskError};

/// Floor applied to model probabilities before building the QP.
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InventoryParams {
    pub c0: f64,
    pub q0: f64,
    pub cb: f64,
    pub qb: f64,
    pub ch: f64,
    pub qh: f64,
}

impl Default for InventoryParams {
    fn default() -> Self {
        Self {
            c0: 10.0,
            q0: 2.0,
            cb: 30.0,
            qb: 14.0,
            ch: 10.0,
            qh: 2.0,
        }
    }
}

impl InventoryParams {
    pub fn validate(&self) -> Result<(), TaskError> {
        let all = [self.c0, self.q0, self.cb, self.qb, self.ch, self.qh];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TaskError::InvalidInput("inventory costs must be finite and nonnegative".into()));
        }
        if self.q0 + self.qb.min(self.qh) <= 0.0 {
            return Err(TaskError::InvalidInput("q0 + min(qb, qh) must be positive".into()));
        }
        Ok(())
    }
}

/// Variables `[z, z_b (k), z_h (k)]`; inequality blocks in order
/// `d - z <= z_b`, `z - d <= z_h`, `z >= 0`, `z_b >= 0`, `z_h >= 0`.
pub fn build_inventory_qp(
    p: &DVector<f64>,
    params: &InventoryParams,
    d: &DVector<f64>,
) -> Result<QuadraticProgram, TaskError> {
    let k = d.len();
    if p.len() != k {
        return Err(TaskError::InvalidInput(format!("{} probabilities for {k} demand levels", p.len())));
    }
    if p.iter().any(|v| !(*v >= 0.0)) || (p.sum() - 1.0).abs() > 1e-6 {
        return Err(TaskError::InvalidInput("not a probability vector".into()));
    }
    let n = 2 * k + 1;
    let mut q = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    q[(0, 0)] = params.q0;
    c[0] = params.c0;
    for i in 0..k {
        q[(1 + i, 1 + i)] = params.qb * p[i];
        q[(1 + k + i, 1 + k + i)] = params.qh * p[i];
        c[1 + i] = params.cb * p[i];
        c[1 + k + i] = params.ch * p[i];
    }
    let (g, h) = inventory_constraints(d);
    Ok(QuadraticProgram::new(q, c, g, h, DMatrix::zeros(0, n), DVector::zeros(0))?)
}

fn inventory_constraints(d: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let k = d.len();
    let n = 2 * k + 1;
    let mut g = DMatrix::zeros(4 * k + 1, n);
    let mut h = DVector::zeros(4 * k + 1);
    for i in 0..k {
        g[(i, 0)] = -1.0;
        g[(i, 1 + i)] = -1.0;
        h[i] = -d[i];
        g[(k + i, 0)] = 1.0;
        g[(k + i, 1 + k + i)] = -1.0;
        h[k + i] = d[i];
        g[(2 * k + 1 + i, 1 + i)] = -1.0;
        g[(3 * k + 1 + i, 1 + k + i)] = -1.0;
    }
    g[(2 * k, 0)] = -1.0;
    (g, h)
}

pub fn realized_stock_cost(z: f64, y: f64, params: &InventoryParams) -> f64 {
    let under = (y - z).max(0.0);
    let over = (z - y).max(0.0);
    params.c0 * z
        + 0.5 * params.q0 * z * z
        + params.cb * under
        + 0.5 * params.qb * under * under
        + params.ch * over
        + 0.5 * params.qh * over * over
}

/// One-sided derivative in `z`; at `z = y` the kink terms are dropped.
pub fn realized_stock_cost_grad(z: f64, y: f64, params: &InventoryParams) -> f64 {
    let mut g = params.c0 + params.q0 * z;
    if y > z {
        g -= params.cb + params.qb * (y - z);
    } else if z > y {
        g += params.ch + params.qh * (z - y);
    }
    g
}

/// `E_p[f(d, z)]` for a discrete demand distribution.
pub fn expected_stock_cost(z: f64, p: &DVector<f64>, d: &DVector<f64>, params: &InventoryParams) -> f64 {
    p.iter().zip(d.iter()).map(|(pi, di)| pi * realized_stock_cost(z, *di, params)).sum()
}

/// Chains QP data gradients into the probability vector: only the diagonal
/// `z_b`/`z_h` blocks of `Q` and the matching entries of `c` depend on `p`.
pub fn probability_gradient(grads: &QpGradients, params: &InventoryParams, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |i, _| {
        let (b, h) = (1 + i, 1 + k + i);
        grads.dq[(b, b)] * params.qb
            + grads.dq[(h, h)] * params.qh
            + grads.dc[b] * params.cb
            + grads.dc[h] * params.ch
    })
}

/// Data tangent for a unit move of `p_i`.
pub fn probability_direction(qp: &QuadraticProgram, params: &InventoryParams, k: usize, i: usize) -> QpDirection {
    let mut dir = QpDirection::zeros_like(qp);
    let (b, h) = (1 + i, 1 + k + i);
    dir.dq[(b, b)] = params.qb;
    dir.dq[(h, h)] = params.qh;
    dir.dc[b] = params.cb;
    dir.dc[h] = params.ch;
    dir
}

/// `dz*/dp` (rows: QP variables, columns: demand levels) obtained by
/// inverting the full differentiation matrix
/// `[[Q, G'], [diag(lambda) G, diag(G z - h)]]` against the right-hand side
/// `-[0; diag(q_b z_b + c_b); diag(q_h z_h + c_h); 0]`.
pub fn explicit_jacobian(
    qp: &QuadraticProgram,
    sol: &QpSolution,
    params: &InventoryParams,
    k: usize,
) -> Result<DMatrix<f64>, TaskError> {
    let n = qp.num_vars();
    let m = qp.num_ineq();
    let inv = kkt_matrix(qp, sol)
        .try_inverse()
        .ok_or(TaskError::Diff(crate::diff::DiffError::Singular))?;
    let mut rhs = DMatrix::zeros(n + m, k);
    for i in 0..k {
        rhs[(1 + i, i)] = -(params.qb * sol.z[1 + i] + params.cb);
        rhs[(1 + k + i, i)] = -(params.qh * sol.z[1 + k + i] + params.ch);
    }
    Ok((inv * rhs).rows(0, n).into_owned())
}

#[derive(Debug, Clone)]
pub struct InventoryTask {
    pub params: InventoryParams,
    pub demand: DVector<f64>,
    pub solver: SolverOptions,
}

impl InventoryTask {
    pub fn new(params: InventoryParams, demand: DVector<f64>) -> Result<Self, TaskError> {
        params.validate()?;
        if demand.is_empty() || demand.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TaskError::InvalidInput("demand grid must be nonnegative".into()));
        }
        if demand.as_slice().windows(2).any(|w| w[1] <= w[0]) {
            return Err(TaskError::InvalidInput("demand grid must be strictly ascending".into()));
        }
        Ok(Self {
            params,
            demand,
            solver: SolverOptions::default(),
        })
    }

    pub fn k(&self) -> usize {
        self.demand.len()
    }

    fn clamp(out: &DVector<f64>) -> DVector<f64> {
        out.map(|v| v.max(PROB_FLOOR))
    }

    /// Optimal order under a known distribution.
    pub fn solve_with_probabilities(&self, p: &DVector<f64>) -> Result<(QuadraticProgram, QpSolution), TaskError> {
        let qp = build_inventory_qp(p, &self.params, &self.demand)?;
        let sol = solve_checked(&qp, &self.solver)?;
        Ok((qp, sol))
    }
}

impl Task for InventoryTask {
    fn name(&self) -> &'static str {
        "inventory"
    }

    fn output_dim(&self) -> usize {
        self.k()
    }

    fn decision_dim(&self) -> usize {
        1
    }

    fn solve_proxy(&self, out: &DVector<f64>) -> Result<Proxy, TaskError> {
        let p = Self::clamp(out);
        let qp = build_inventory_qp(&p, &self.params, &self.demand)?;
        let sol = solve_checked(&qp, &self.solver)?;
        Ok(Proxy {
            decision: DVector::from_element(1, sol.z[0]),
            qp,
            sol,
        })
    }

    fn backward(&self, out: &DVector<f64>, proxy: &Proxy, dl_dd: &DVector<f64>) -> Result<DVector<f64>, TaskError> {
        let mut dl_dz = DVector::zeros(proxy.qp.num_vars());
        dl_dz[0] = dl_dd[0];
        let fact = factorize_kkt(&proxy.qp, &proxy.sol)?;
        let grads = backward(&proxy.qp, &fact, &dl_dz)?;
        let dp = probability_gradient(&grads, &self.params, self.k());
        Ok(DVector::from_fn(self.k(), |i, _| if out[i] > PROB_FLOOR { dp[i] } else { 0.0 }))
    }

    fn realized_cost(&self, d: &DVector<f64>, y: &DVector<f64>) -> f64 {
        realized_stock_cost(d[0], y[0], &self.params)
    }

    fn realized_cost_grad(&self, d: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, realized_stock_cost_grad(d[0], y[0], &self.params))
    }

    fn feasible_set(&self) -> FeasibleSet {
        FeasibleSet {
            g: DMatrix::from_element(1, 1, -1.0),
            h: DVector::zeros(1),
            a: DMatrix::zeros(0, 1),
            b: DVector::zeros(0),
        }
    }

    fn likelihood_targets(&self, data: &Dataset) -> FitTargets {
        FitTargets::Classes(data.labels.clone().expect("inventory data carries demand labels"))
    }

    fn point_prediction(&self, out: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, out.dot(&self.demand))
    }
}

/// Parameter gradient of the mean realized stock cost over a batch.
pub fn inventory_task_gradient(
    model: &mut PredictiveModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    task: &InventoryTask,
    mode: Mode,
) -> Result<(f64, Gradients), TaskError> {
    crate::trainer::task_gradient(task, model, x, y, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthMode {
    Linear,
    Nonlinear,
}

/// Ground-truth conditional demand distribution: a softmax of `Theta' x`
/// (linear) or of its elementwise square (nonlinear).
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTruth {
    /// `n x k`
    pub theta: DMatrix<f64>,
    pub mode: TruthMode,
    pub demand: DVector<f64>,
}

impl DemandTruth {
    /// `Theta` with i.i.d. `N(0, 1/n)` entries and demand grid `0..k`.
    pub fn random(n: usize, k: usize, mode: TruthMode, seed: u64) -> Self {
        let theta = normal_matrix(&mut rng(mix_seed(&[seed, 0])), n, k) / (n as f64).sqrt();
        Self {
            theta,
            mode,
            demand: DVector::from_fn(k, |i, _| i as f64),
        }
    }

    /// Row-wise true probabilities.
    pub fn probabilities(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut logits = x * &self.theta;
        if self.mode == TruthMode::Nonlinear {
            logits.apply(|v| *v = *v * *v);
        }
        softmax_rows(&logits)
    }

    /// `num` samples with `x ~ N(0, I)` and demand drawn from the truth.
    pub fn sample(&self, num: usize, seed: u64) -> Dataset {
        let mut r = rng(mix_seed(&[seed, 1]));
        let x = normal_matrix(&mut r, num, self.theta.nrows());
        let probs = self.probabilities(&x);
        let labels: Vec<usize> = (0..num)
            .map(|i| {
                let w: Vec<f64> = probs.row(i).iter().copied().collect();
                WeightedIndex::new(&w).expect("softmax weights are positive").sample(&mut r)
            })
            .collect();
        let y = DMatrix::from_fn(num, 1, |i, _| self.demand[labels[i]]);
        Dataset {
            x,
            y,
            labels: Some(labels),
        }
    }
}

/// Draws a ground truth from `seed` and samples `num` points from it.
pub fn gen_inventory_data(n: usize, k: usize, num: usize, mode: TruthMode, seed: u64) -> (DemandTruth, Dataset) {
    let truth = DemandTruth::random(n, k, mode, seed);
    let data = truth.sample(num, seed);
    (truth, data)
}

/// CSV with columns `x0..x{n-1}, y` where `y` is the demand-level index.
pub fn write_inventory_csv<W: Write>(data: &Dataset, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..data.x.ncols()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    out.write_record(&header)?;
    let labels = data.labels.as_deref().unwrap_or(&[]);
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.x.row(i).iter().map(|v| format!("{v:e}")).collect();
        rec.push(labels.get(i).map_or(String::new(), |l| l.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Uniform sample over the simplex interior, for tests and gradient checks.
pub fn random_probabilities<R: Rng>(r: &mut R, k: usize) -> DVector<f64> {
    let v = DVector::from_fn(k, |_, _| r.gen_range(0.05..1.0));
    let s = v.sum();
    v / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::jacobian_dz_dtheta;
    use approx::assert_abs_diff_eq;

    fn unit_case() -> (InventoryTask, DVector<f64>) {
        let task = InventoryTask::new(InventoryParams::default(), DVector::from_element(1, 1.0)).unwrap();
        (task, DVector::from_element(1, 1.0))
    }

    #[test]
    fn single_level_order_matches_demand() {
        let (task, p) = unit_case();
        let (qp, sol) = task.solve_with_probabilities(&p).unwrap();
        assert_abs_diff_eq!(sol.z[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.z[1], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.z[2], 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(qp.objective(&sol.z), 11.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_demand_orders_nothing() {
        // a repeated grid point is allowed by the QP builder itself
        let d = DVector::from_vec(vec![0.0, 0.0]);
        let p = DVector::from_vec(vec![0.5, 0.5]);
        let qp = build_inventory_qp(&p, &InventoryParams::default(), &d).unwrap();
        let sol = crate::qp::solve_qp(&qp, &SolverOptions::default());
        assert!(sol.is_optimal());
        assert!(sol.z.amax() < 1e-7);
    }

    #[test]
    fn objective_blocks_follow_probabilities() {
        let p = DVector::from_vec(vec![0.2, 0.3, 0.5]);
        let d = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let params = InventoryParams::default();
        let qp = build_inventory_qp(&p, &params, &d).unwrap();
        assert_eq!(qp.num_vars(), 7);
        assert_eq!(qp.num_ineq(), 13);
        for i in 0..3 {
            assert_eq!(qp.q()[(1 + i, 1 + i)], params.qb * p[i]);
            assert_eq!(qp.q()[(4 + i, 4 + i)], params.qh * p[i]);
            assert_eq!(qp.c()[1 + i], params.cb * p[i]);
            assert_eq!(qp.c()[4 + i], params.ch * p[i]);
        }
        assert_eq!(qp.q()[(0, 0)], params.q0);
        assert_eq!(qp.c()[0], params.c0);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let d = DVector::from_vec(vec![1.0, 2.0]);
        let params = InventoryParams::default();
        assert!(build_inventory_qp(&DVector::from_vec(vec![0.7, 0.7]), &params, &d).is_err());
        assert!(build_inventory_qp(&DVector::from_vec(vec![1.5, -0.5]), &params, &d).is_err());
        assert!(build_inventory_qp(&DVector::from_vec(vec![1.0]), &params, &d).is_err());
    }

    #[test]
    fn realized_cost_examples() {
        let params = InventoryParams::default();
        assert_eq!(realized_stock_cost(1.0, 1.0, &params), 11.0);
        assert_eq!(realized_stock_cost(0.0, 1.0, &params), 37.0);
        assert_eq!(realized_stock_cost(1.0, 0.0, &params), 22.0);
    }

    #[test]
    fn realized_cost_gradient_matches_differences() {
        let params = InventoryParams::default();
        for (z, y) in [(0.3, 2.0), (4.0, 1.0), (2.5, 2.6)] {
            let h = 1e-6;
            let fd = (realized_stock_cost(z + h, y, &params) - realized_stock_cost(z - h, y, &params)) / (2.0 * h);
            assert_abs_diff_eq!(realized_stock_cost_grad(z, y, &params), fd, epsilon = 1e-5);
        }
    }

    #[test]
    fn slack_variables_are_tight() {
        let mut r = rng(3);
        let d = DVector::from_fn(6, |i, _| i as f64);
        let params = InventoryParams::default();
        for _ in 0..5 {
            let p = random_probabilities(&mut r, 6);
            let qp = build_inventory_qp(&p, &params, &d).unwrap();
            let sol = crate::qp::solve_qp(&qp, &SolverOptions::default());
            let z = sol.z[0];
            for i in 0..6 {
                assert_abs_diff_eq!(sol.z[1 + i], (d[i] - z).max(0.0), epsilon = 1e-6);
                assert_abs_diff_eq!(sol.z[7 + i], (z - d[i]).max(0.0), epsilon = 1e-6);
            }
            assert_abs_diff_eq!(qp.objective(&sol.z), expected_stock_cost(z, &p, &d, &params), epsilon = 1e-6);
        }
    }

    #[test]
    fn explicit_jacobian_matches_forward_mode() {
        let mut r = rng(4);
        let d = DVector::from_fn(5, |i, _| i as f64);
        let params = InventoryParams::default();
        let p = random_probabilities(&mut r, 5);
        let task = InventoryTask::new(params, d.clone()).unwrap();
        let (qp, sol) = task.solve_with_probabilities(&p).unwrap();
        let jac = explicit_jacobian(&qp, &sol, &params, 5).unwrap();
        let fact = factorize_kkt(&qp, &sol).unwrap();
        for i in 0..5 {
            let dz = jacobian_dz_dtheta(&qp, &fact, &probability_direction(&qp, &params, 5, i)).unwrap();
            assert!((dz - jac.column(i)).amax() < 1e-8);
        }
    }

    #[test]
    fn zero_theta_gives_uniform_labels() {
        let truth = DemandTruth {
            theta: DMatrix::zeros(3, 4),
            mode: TruthMode::Linear,
            demand: DVector::from_fn(4, |i, _| i as f64),
        };
        let data = truth.sample(10_000, 9);
        let labels = data.labels.unwrap();
        let sd = (0.25f64 * 0.75 / 10_000.0).sqrt();
        for j in 0..4 {
            let freq = labels.iter().filter(|&&l| l == j).count() as f64 / 10_000.0;
            assert!((freq - 0.25).abs() < 3.0 * sd, "level {j}: {freq}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let (ta, a) = gen_inventory_data(5, 3, 50, TruthMode::Nonlinear, 11);
        let (tb, b) = gen_inventory_data(5, 3, 50, TruthMode::Nonlinear, 11);
        assert_eq!(ta, tb);
        assert_eq!(a, b);
        let (_, c) = gen_inventory_data(5, 3, 50, TruthMode::Nonlinear, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn dominant_column_concentrates_labels() {
        let mut theta = DMatrix::zeros(2, 3);
        theta[(0, 2)] = 50.0;
        let truth = DemandTruth {
            theta,
            mode: TruthMode::Linear,
            demand: DVector::from_fn(3, |i, _| i as f64),
        };
        let data = truth.sample(2000, 1);
        let labels = data.labels.unwrap();
        // x0 > 0 essentially always selects the last level
        let mut hits = 0;
        let mut total = 0;
        for i in 0..2000 {
            if data.x[(i, 0)] > 0.1 {
                total += 1;
                hits += usize::from(labels[i] == 2);
            }
        }
        assert!(hits as f64 / total as f64 > 0.99);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (_, data) = gen_inventory_data(2, 3, 4, TruthMode::Linear, 0);
        let mut buf = Vec::new();
        write_inventory_csv(&data, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,x1,y");
        assert_eq!(lines.len(), 5);
    }
}
