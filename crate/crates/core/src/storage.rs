//! Battery arbitrage against day-ahead prices.
//!
//! Over 24 hours the operator chooses charge `z_in`, discharge `z_out` and
//! state of charge `z_state` to minimize
//! `sum_i y_i (z_in - z_out)_i + lambda |z_state - B/2|^2 + eps |z_in|^2 + eps |z_out|^2`.
//! The cost is linear in the price, so its expectation only needs the price
//! means. The model predicts log-prices and the proxy uses `mu = exp(out)`.
//!
//! Variables are stacked as `[z_in; z_out; z_state]`. The QP stores the
//! quadratic weights as `Q = diag(2 eps, 2 eps, 2 lambda)` so that
//! `z'Qz / 2` reproduces the cost exactly, and it drops the constant
//! `24 lambda (B/2)^2`; [`storage_objective`] adds it back.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diff::{backward, factorize_kkt};
use crate::generation::{base_load, calendar_features, temperature_path, HOURS};
use crate::models::FitTargets;
use crate::qp::{QuadraticProgram, SolverOptions};
use crate::random::{mix_seed, rng};
use crate::task::{solve_checked, Dataset, FeasibleSet, Proxy, Task, TaskError};

/// Largest log-price the proxy accepts.
pub const MAX_LOG_PRICE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryParams {
    pub capacity: f64,
    pub gamma_eff: f64,
    pub c_in: f64,
    pub c_out: f64,
    pub lambda_flex: f64,
    pub eps_health: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity: 1.0,
            gamma_eff: 0.9,
            c_in: 0.5,
            c_out: 0.2,
            lambda_flex: 0.1,
            eps_health: 0.05,
        }
    }
}

/// The four `(lambda, eps)` settings of the benchmark grid.
pub const FLEX_GRID: [(f64, f64); 4] = [(0.1, 0.05), (1.0, 0.5), (10.0, 5.0), (35.0, 15.0)];

impl BatteryParams {
    pub fn with_weights(lambda_flex: f64, eps_health: f64) -> Self {
        Self {
            lambda_flex,
            eps_health,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let all = [self.capacity, self.gamma_eff, self.c_in, self.c_out, self.lambda_flex, self.eps_health];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TaskError::InvalidInput("battery parameters must be positive".into()));
        }
        if self.gamma_eff > 1.0 {
            return Err(TaskError::InvalidInput("gamma_eff must lie in (0, 1]".into()));
        }
        if self.eps_health >= self.lambda_flex {
            return Err(TaskError::InvalidInput("eps_health must be below lambda_flex".into()));
        }
        Ok(())
    }

    fn offset(&self, hours: usize) -> f64 {
        self.lambda_flex * hours as f64 * (self.capacity / 2.0).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageDecision {
    pub z_in: DVector<f64>,
    pub z_out: DVector<f64>,
    pub z_state: DVector<f64>,
}

impl StorageDecision {
    pub fn from_stacked(z: &DVector<f64>) -> Self {
        let h = z.len() / 3;
        Self {
            z_in: z.rows(0, h).into_owned(),
            z_out: z.rows(h, h).into_owned(),
            z_state: z.rows(2 * h, h).into_owned(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let h = self.z_in.len();
        DVector::from_fn(3 * h, |i, _| match i / h {
            0 => self.z_in[i],
            1 => self.z_out[i - h],
            _ => self.z_state[i - 2 * h],
        })
    }

    /// Largest violation of the box, initial-state and recursion constraints.
    pub fn max_violation(&self, params: &BatteryParams) -> f64 {
        let box_viol = |v: &DVector<f64>, hi: f64| v.iter().map(|&x| (-x).max(x - hi).max(0.0)).fold(0.0, f64::max);
        let mut worst = box_viol(&self.z_in, params.c_in)
            .max(box_viol(&self.z_out, params.c_out))
            .max(box_viol(&self.z_state, params.capacity))
            .max((self.z_state[0] - params.capacity / 2.0).abs());
        for i in 0..self.z_state.len() - 1 {
            let next = self.z_state[i] - self.z_out[i] + params.gamma_eff * self.z_in[i];
            worst = worst.max((self.z_state[i + 1] - next).abs());
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["hour", "z_in", "z_out", "z_state"])?;
        for i in 0..self.z_in.len() {
            out.write_record(&[
                i.to_string(),
                format!("{:e}", self.z_in[i]),
                format!("{:e}", self.z_out[i]),
                format!("{:e}", self.z_state[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Constraint blocks: boxes on all three groups (rows `z_in <= c_in`,
/// `-z_in <= 0`, `z_out <= c_out`, `-z_out <= 0`, `z_state <= B`,
/// `-z_state <= 0`), then `z_state,1 = B/2` and the state recursion
/// `gamma z_in,i - z_out,i + z_state,i - z_state,i+1 = 0`.
pub fn storage_constraints(hours: usize, params: &BatteryParams) -> FeasibleSet {
    let n = 3 * hours;
    let mut g = DMatrix::zeros(2 * n, n);
    let mut h = DVector::zeros(2 * n);
    for (block, hi) in [params.c_in, params.c_out, params.capacity].into_iter().enumerate() {
        for i in 0..hours {
            let col = block * hours + i;
            g[(2 * block * hours + i, col)] = 1.0;
            h[2 * block * hours + i] = hi;
            g[((2 * block + 1) * hours + i, col)] = -1.0;
        }
    }
    let mut a = DMatrix::zeros(hours, n);
    let mut b = DVector::zeros(hours);
    a[(0, 2 * hours)] = 1.0;
    b[0] = params.capacity / 2.0;
    for i in 0..hours - 1 {
        a[(i + 1, i)] = params.gamma_eff;
        a[(i + 1, hours + i)] = -1.0;
        a[(i + 1, 2 * hours + i)] = 1.0;
        a[(i + 1, 2 * hours + i + 1)] = -1.0;
    }
    FeasibleSet { g, h, a, b }
}

pub fn build_storage_qp(mu: &DVector<f64>, params: &BatteryParams) -> Result<QuadraticProgram, TaskError> {
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(TaskError::InvalidInput("price means must be finite".into()));
    }
    let hours = mu.len();
    let n = 3 * hours;
    let mut q = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for i in 0..hours {
        q[(i, i)] = 2.0 * params.eps_health;
        q[(hours + i, hours + i)] = 2.0 * params.eps_health;
        q[(2 * hours + i, 2 * hours + i)] = 2.0 * params.lambda_flex;
        c[i] = mu[i];
        c[hours + i] = -mu[i];
        c[2 * hours + i] = -params.lambda_flex * params.capacity;
    }
    let set = storage_constraints(hours, params);
    Ok(QuadraticProgram::new(q, c, set.g, set.h, set.a, set.b)?)
}

/// QP objective with the dropped constant restored, i.e. the expected cost
/// under price means `mu`.
pub fn storage_objective(qp: &QuadraticProgram, z: &DVector<f64>, params: &BatteryParams) -> f64 {
    qp.objective(z) + params.offset(z.len() / 3)
}

pub fn realized_storage_cost(d: &StorageDecision, y: &DVector<f64>, params: &BatteryParams) -> f64 {
    let half = params.capacity / 2.0;
    y.dot(&(&d.z_in - &d.z_out))
        + params.lambda_flex * d.z_state.map(|s| (s - half).powi(2)).sum()
        + params.eps_health * (d.z_in.norm_squared() + d.z_out.norm_squared())
}

/// Gradient of [`realized_storage_cost`] with respect to the stacked decision.
pub fn realized_storage_cost_grad(d: &StorageDecision, y: &DVector<f64>, params: &BatteryParams) -> DVector<f64> {
    let half = params.capacity / 2.0;
    StorageDecision {
        z_in: y + &d.z_in * (2.0 * params.eps_health),
        z_out: -y + &d.z_out * (2.0 * params.eps_health),
        z_state: d.z_state.map(|s| 2.0 * params.lambda_flex * (s - half)),
    }
    .stacked()
}

/// Storage task for a model that predicts hourly log-prices.
#[derive(Debug, Clone)]
pub struct StorageTask {
    pub params: BatteryParams,
    pub hours: usize,
    pub solver: SolverOptions,
}

impl StorageTask {
    pub fn new(params: BatteryParams) -> Result<Self, TaskError> {
        params.validate()?;
        Ok(Self {
            params,
            hours: HOURS,
            // the active-set refinement almost never applies at this size
            // and costs a third of the solve
            solver: SolverOptions {
                polish: false,
                ..SolverOptions::default()
            },
        })
    }

    fn price_means(&self, out: &DVector<f64>) -> Result<DVector<f64>, TaskError> {
        if out.iter().any(|v| !(v.is_finite() && *v <= MAX_LOG_PRICE)) {
            return Err(TaskError::InvalidInput(format!("log-price outside (-inf, {MAX_LOG_PRICE}]")));
        }
        Ok(out.map(f64::exp))
    }
}

impl Task for StorageTask {
    fn name(&self) -> &'static str {
        "storage"
    }

    fn output_dim(&self) -> usize {
        self.hours
    }

    fn decision_dim(&self) -> usize {
        3 * self.hours
    }

    fn solve_proxy(&self, out: &DVector<f64>) -> Result<Proxy, TaskError> {
        let qp = build_storage_qp(&self.price_means(out)?, &self.params)?;
        let sol = solve_checked(&qp, &self.solver)?;
        Ok(Proxy {
            decision: sol.z.clone(),
            qp,
            sol,
        })
    }

    fn backward(&self, out: &DVector<f64>, proxy: &Proxy, dl_dd: &DVector<f64>) -> Result<DVector<f64>, TaskError> {
        let mu = self.price_means(out)?;
        let fact = factorize_kkt(&proxy.qp, &proxy.sol)?;
        let grads = backward(&proxy.qp, &fact, dl_dd)?;
        let h = self.hours;
        Ok(DVector::from_fn(h, |i, _| (grads.dc[i] - grads.dc[h + i]) * mu[i]))
    }

    fn realized_cost(&self, d: &DVector<f64>, y: &DVector<f64>) -> f64 {
        realized_storage_cost(&StorageDecision::from_stacked(d), y, &self.params)
    }

    fn realized_cost_grad(&self, d: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        realized_storage_cost_grad(&StorageDecision::from_stacked(d), y, &self.params)
    }

    fn feasible_set(&self) -> FeasibleSet {
        storage_constraints(self.hours, &self.params)
    }

    fn likelihood_targets(&self, data: &Dataset) -> FitTargets {
        FitTargets::Values(data.y.map(f64::ln))
    }

    fn point_prediction(&self, out: &DVector<f64>) -> DVector<f64> {
        out.map(f64::exp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceData {
    pub data: Dataset,
    pub feature_names: Vec<String>,
}

fn spike_probability(load: f64) -> f64 {
    0.01 + 0.12 / (1.0 + (-6.0 * (load - 2.6)).exp())
}

/// Synthetic hourly prices for `days` consecutive days.
///
/// Log-prices follow a daily shape driven by the load forecast plus an AR(1)
/// day effect and hourly noise. On top of that, each hour spikes with a
/// probability that rises with load, multiplying the price by a factor drawn
/// uniformly from `[3, 10]`. Features are the previous day's log-prices and
/// temperatures, the day's load and temperature forecasts, and calendar flags.
pub fn gen_price_data(days: usize, seed: u64) -> PriceData {
    let mut r = rng(mix_seed(&[seed, 11]));
    let temps = temperature_path(&mut r, days);
    let day_noise = Normal::new(0.0, 0.12).expect("valid");
    let hour_noise = Normal::new(0.0, 0.1).expect("valid");
    let mut effect = 0.0;
    let mut loads = Vec::with_capacity(days + 1);
    let mut prices: Vec<[f64; HOURS]> = Vec::with_capacity(days + 1);
    for (t, temp) in temps.iter().enumerate() {
        effect = 0.8 * effect + day_noise.sample(&mut r);
        let load: [f64; HOURS] = std::array::from_fn(|h| base_load(t, h, temp[h]));
        let day = std::array::from_fn(|h| {
            let log_p = 3.4 + 0.6 * (load[h] - 2.0) + effect + hour_noise.sample(&mut r);
            let spike = if r.gen::<f64>() < spike_probability(load[h]) {
                r.gen_range(3.0..10.0)
            } else {
                1.0
            };
            log_p.exp() * spike
        });
        loads.push(load);
        prices.push(day);
    }

    let mut names: Vec<String> = Vec::new();
    for prefix in ["log_price_prev", "temp_prev", "load_next", "temp_next"] {
        names.extend((0..HOURS).map(|h| format!("{prefix}_{h}")));
    }
    names.extend(["weekend", "holiday", "year_sin", "year_cos"].map(String::from));
    let x = DMatrix::from_fn(days, names.len(), |i, j| {
        let t = i + 1;
        let h = j % HOURS;
        match j / HOURS {
            0 => prices[t - 1][h].ln(),
            1 => temps[t - 1][h] / 10.0,
            2 => loads[t][h],
            3 => temps[t][h] / 10.0,
            _ => calendar_features(t)[j - 4 * HOURS],
        }
    });
    let y = DMatrix::from_fn(days, HOURS, |i, h| prices[i + 1][h]);
    PriceData {
        data: Dataset { x, y, labels: None },
        feature_names: names,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{jacobian_dz_dtheta, QpDirection};
    use crate::random::normal_vector;
    use approx::assert_abs_diff_eq;

    fn solve(mu: &DVector<f64>, params: &BatteryParams) -> (QuadraticProgram, DVector<f64>) {
        let qp = build_storage_qp(mu, params).unwrap();
        let sol = solve_checked(&qp, &SolverOptions::default()).unwrap();
        (qp, sol.z)
    }

    /// Accelerated projected gradient on the dual; `Q` is diagonal so the
    /// primal minimizer is explicit.
    fn dual_oracle(qp: &QuadraticProgram, iters: usize) -> DVector<f64> {
        let (m, p) = (qp.num_ineq(), qp.num_eq());
        let mut k = DMatrix::zeros(m + p, qp.num_vars());
        k.rows_mut(0, m).copy_from(qp.g());
        k.rows_mut(m, p).copy_from(qp.a());
        let qinv = qp.q().diagonal().map(|v| 1.0 / v);
        let rhs = DVector::from_fn(m + p, |i, _| if i < m { qp.h()[i] } else { qp.b()[i - m] });
        let primal = |y: &DVector<f64>| -(qp.c() + k.transpose() * y).component_mul(&qinv);
        let scaled = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * qinv[j].sqrt());
        let step = 1.0 / (&scaled * scaled.transpose()).symmetric_eigenvalues().max();
        let project = |mut y: DVector<f64>| {
            for i in 0..m {
                y[i] = y[i].max(0.0);
            }
            y
        };
        let (mut y, mut w, mut t) = (DVector::zeros(m + p), DVector::zeros(m + p), 1.0f64);
        for _ in 0..iters {
            let z = primal(&w);
            let next = project(&w + (&k * z - &rhs) * step);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            w = &next + (&next - &y) * ((t - 1.0) / t_next);
            y = next;
            t = t_next;
        }
        primal(&y)
    }

    #[test]
    fn zero_prices_idle_at_half_charge() {
        for (l, e) in FLEX_GRID {
            let p = BatteryParams::with_weights(l, e);
            let (qp, z) = solve(&DVector::zeros(24), &p);
            let d = StorageDecision::from_stacked(&z);
            assert!(d.z_in.amax() < 1e-7 && d.z_out.amax() < 1e-7);
            assert!((d.z_state.add_scalar(-0.5)).amax() < 1e-7);
            assert!(storage_objective(&qp, &z, &p).abs() < 1e-7);
        }
    }

    #[test]
    fn qp_objective_is_expected_cost() {
        let mut r = rng(4);
        let p = BatteryParams::with_weights(1.0, 0.5);
        let mu = normal_vector(&mut r, 24).map(|v| 30.0 + 5.0 * v);
        let (qp, z) = solve(&mu, &p);
        let d = StorageDecision::from_stacked(&z);
        assert_abs_diff_eq!(storage_objective(&qp, &z, &p), realized_storage_cost(&d, &mu, &p), epsilon = 1e-9);
    }

    #[test]
    fn solutions_are_feasible() {
        let mut r = rng(9);
        for (l, e) in FLEX_GRID {
            let p = BatteryParams::with_weights(l, e);
            for _ in 0..5 {
                let mu = normal_vector(&mut r, 24).map(|v| (3.4 + v).exp());
                let (_, z) = solve(&mu, &p);
                assert!(StorageDecision::from_stacked(&z).max_violation(&p) < 1e-6);
            }
        }
    }

    #[test]
    fn cheap_then_dear_charges_then_discharges() {
        let p = BatteryParams::with_weights(0.1, 0.05);
        let mut mu = DVector::from_element(24, 40.0);
        mu[0] = -40.0;
        let (qp, z) = solve(&mu, &p);
        let d = StorageDecision::from_stacked(&z);
        assert_abs_diff_eq!(d.z_in[0], p.c_in, epsilon = 1e-6);
        assert!(d.z_out[0] < 1e-7 && d.z_in.rows(1, 23).amax() < 1e-6);
        assert!(d.z_out.sum() > 0.5);
        let oracle = dual_oracle(&qp, 20_000);
        assert!((&z - &oracle).amax() < 1e-3, "oracle gap {}", (&z - &oracle).amax());
    }

    #[test]
    fn realized_cost_term_by_term() {
        let mut r = rng(2);
        let p = BatteryParams::with_weights(10.0, 5.0);
        let d = StorageDecision {
            z_in: DVector::from_fn(24, |_, _| r.gen_range(0.0..0.5)),
            z_out: DVector::from_fn(24, |_, _| r.gen_range(0.0..0.2)),
            z_state: DVector::from_fn(24, |_, _| r.gen_range(0.0..1.0)),
        };
        let y = normal_vector(&mut r, 24);
        let mut expect = 0.0;
        for i in 0..24 {
            expect += y[i] * d.z_in[i] - y[i] * d.z_out[i];
            expect += 10.0 * (d.z_state[i] - 0.5) * (d.z_state[i] - 0.5);
            expect += 5.0 * d.z_in[i] * d.z_in[i] + 5.0 * d.z_out[i] * d.z_out[i];
        }
        assert_abs_diff_eq!(realized_storage_cost(&d, &y, &p), expect, epsilon = 1e-10);
        // affine in the price
        let y2 = normal_vector(&mut r, 24);
        let zero = DVector::zeros(24);
        let lhs = realized_storage_cost(&d, &(&y + &y2), &p) + realized_storage_cost(&d, &zero, &p);
        let rhs = realized_storage_cost(&d, &y, &p) + realized_storage_cost(&d, &y2, &p);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
    }

    #[test]
    fn expected_cost_depends_only_on_the_mean() {
        let p = BatteryParams::with_weights(1.0, 0.5);
        let mut r = rng(21);
        let mu = normal_vector(&mut r, 24).map(|v| (3.4 + 0.3 * v).exp());
        let (qp, z) = solve(&mu, &p);
        let d = StorageDecision::from_stacked(&z);
        let closed = storage_objective(&qp, &z, &p);
        // lognormal with mean mu: log y ~ N(ln mu - s^2/2, s^2)
        let s = 0.8;
        let noise = Normal::new(0.0, s).unwrap();
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let y = mu.map(|m| (m.ln() - s * s / 2.0 + noise.sample(&mut r)).exp());
                realized_storage_cost(&d, &y, &p)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let se = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
        assert!((mean - closed).abs() < 3.0 * se, "{mean} vs {closed} (se {se})");
    }

    #[test]
    fn idle_schedule_costs_nothing() {
        let d = StorageDecision {
            z_in: DVector::zeros(24),
            z_out: DVector::zeros(24),
            z_state: DVector::from_element(24, 0.5),
        };
        let y = DVector::from_fn(24, |i, _| 100.0 * i as f64 - 3.0);
        assert_eq!(realized_storage_cost(&d, &y, &BatteryParams::default()), 0.0);
    }

    #[test]
    fn more_flexibility_weight_stays_closer_to_half() {
        let mut r = rng(17);
        for _ in 0..5 {
            let mu = normal_vector(&mut r, 24).map(|v| (3.4 + 0.8 * v).exp());
            let mut last = f64::INFINITY;
            for l in [0.1, 0.3, 1.0, 3.0, 10.0, 35.0] {
                let (_, z) = solve(&mu, &BatteryParams::with_weights(l, 0.05));
                let dev = StorageDecision::from_stacked(&z).z_state.add_scalar(-0.5).norm_squared();
                assert!(dev <= last + 1e-6, "lambda {l}: {dev} > {last}");
                last = dev;
            }
        }
    }

    #[test]
    fn forward_and_reverse_modes_agree() {
        let mut r = rng(5);
        let p = BatteryParams::with_weights(1.0, 0.5);
        let mu = normal_vector(&mut r, 24).map(|v| (3.4 + v).exp());
        let qp = build_storage_qp(&mu, &p).unwrap();
        let sol = solve_checked(&qp, &SolverOptions::default()).unwrap();
        let fact = factorize_kkt(&qp, &sol).unwrap();
        let v = normal_vector(&mut r, 72);
        let w = normal_vector(&mut r, 72);
        let mut dir = QpDirection::zeros_like(&qp);
        dir.dc = v.clone();
        let jv = jacobian_dz_dtheta(&qp, &fact, &dir).unwrap();
        let jtw = backward(&qp, &fact, &w).unwrap().dc;
        assert_abs_diff_eq!(w.dot(&jv), jtw.dot(&v), epsilon = 1e-9 * w.norm() * v.norm());
    }

    #[test]
    fn zero_upstream_gradient_is_zero() {
        let task = StorageTask::new(BatteryParams::default()).unwrap();
        let out = DVector::from_element(24, 3.0);
        let proxy = task.solve_proxy(&out).unwrap();
        assert_eq!(task.backward(&out, &proxy, &DVector::zeros(72)).unwrap().amax(), 0.0);
    }

    #[test]
    fn log_price_gradient_matches_differences() {
        let task = StorageTask::new(BatteryParams::with_weights(1.0, 0.5)).unwrap();
        let mut r = rng(8);
        let out = normal_vector(&mut r, 24).map(|v| 3.4 + 0.5 * v);
        let y = normal_vector(&mut r, 24).map(|v| (3.4 + v).exp());
        let loss = |o: &DVector<f64>| {
            let d = task.solve_proxy(o).unwrap().decision;
            task.realized_cost(&d, &y)
        };
        let proxy = task.solve_proxy(&out).unwrap();
        let g = task
            .backward(&out, &proxy, &task.realized_cost_grad(&proxy.decision, &y))
            .unwrap();
        let h = 1e-6;
        for i in [0, 7, 13, 23] {
            let mut plus = out.clone();
            plus[i] += h;
            let mut minus = out.clone();
            minus[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "hour {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BatteryParams::with_weights(1.0, 1.0).validate().is_err());
        assert!(BatteryParams { gamma_eff: 1.5, ..BatteryParams::default() }.validate().is_err());
        assert!(BatteryParams::default().validate().is_ok());
    }

    #[test]
    fn decision_csv_has_24_rows() {
        let d = StorageDecision::from_stacked(&DVector::from_fn(72, |i, _| i as f64));
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 25);
        assert!(text.starts_with("hour,z_in,z_out,z_state\n0,0e0,2.4e1,4.8e1\n"));
    }

    #[test]
    fn prices_spike_and_stay_positive() {
        let a = gen_price_data(400, 1);
        assert_eq!(a, gen_price_data(400, 1));
        assert!(a.data.y.min() > 0.0);
        let logs = a.data.y.map(f64::ln);
        let mean = logs.mean();
        let sd = logs.variance().sqrt();
        let extreme = logs.iter().filter(|&&v| v > mean + 4.0 * sd).count();
        assert!(extreme > 0, "no spikes");
        assert_eq!(a.data.x[(3, 5)], a.data.y[(2, 5)].ln());
    }
}
