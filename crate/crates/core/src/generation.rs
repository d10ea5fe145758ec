//! Day-ahead generator scheduling under Gaussian load forecasts.
//!
//! For `y ~ N(mu, sigma^2)` the expected hourly cost
//! `E[gs (y - z)+ + ge (z - y)+ + (z - y)^2 / 2]` equals
//! `alpha(z) + ((z - mu)^2 + sigma^2) / 2` with
//! `alpha(z) = (gs + ge)(sigma^2 p(z) + (z - mu) F(z)) - gs (z - mu)`,
//! `p` and `F` the normal density and distribution function. The schedule
//! minimizes the sum over 24 hours subject to ramp limits
//! `|z_i - z_{i-1}| <= c_r`, solved by sequential quadratic programming.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diff::{backward, factorize_kkt};
use crate::models::{FitTargets, PredictiveModel};
use crate::qp::{QpSolution, QuadraticProgram, SolverOptions};
use crate::random::{mix_seed, rng};
use crate::task::{solve_checked, Dataset, FeasibleSet, Proxy, Task, TaskError};

pub const HOURS: usize = 24;
pub const MIN_VARIANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSchedParams {
    pub gamma_e: f64,
    pub gamma_s: f64,
    pub c_r: f64,
    pub sqp_delta: f64,
    pub sqp_max_iter: usize,
}

impl Default for GenSchedParams {
    fn default() -> Self {
        Self {
            gamma_e: 0.5,
            gamma_s: 50.0,
            c_r: 0.4,
            sqp_delta: 1e-6,
            sqp_max_iter: 50,
        }
    }
}

impl GenSchedParams {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.gamma_e > 0.0 && self.gamma_s > self.gamma_e) {
            return Err(TaskError::InvalidInput("need gamma_s > gamma_e > 0".into()));
        }
        if !(self.c_r > 0.0 && self.sqp_delta > 0.0 && self.sqp_max_iter >= 1) {
            return Err(TaskError::InvalidInput("need c_r > 0, sqp_delta > 0, sqp_max_iter >= 1".into()));
        }
        Ok(())
    }

    fn gamma_sum(&self) -> f64 {
        self.gamma_s + self.gamma_e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianForecast {
    pub mu: DVector<f64>,
    pub sigma2: DVector<f64>,
}

impl GaussianForecast {
    pub fn new(mu: DVector<f64>, sigma2: DVector<f64>) -> Result<Self, TaskError> {
        if mu.len() != sigma2.len() {
            return Err(TaskError::InvalidInput("mean and variance lengths differ".into()));
        }
        if mu.iter().any(|v| !v.is_finite()) || sigma2.iter().any(|v| !(v.is_finite() && *v >= MIN_VARIANCE)) {
            return Err(TaskError::InvalidInput(format!("variances must be finite and at least {MIN_VARIANCE}")));
        }
        Ok(Self { mu, sigma2 })
    }
}

pub fn normal_pdf(z: f64, mu: f64, sigma2: f64) -> f64 {
    (-(z - mu).powi(2) / (2.0 * sigma2)).exp() / (2.0 * PI * sigma2).sqrt()
}

pub fn normal_cdf(z: f64, mu: f64, sigma2: f64) -> f64 {
    0.5 * libm::erfc(-(z - mu) / (SQRT_2 * sigma2.sqrt()))
}

pub fn alpha(z: f64, mu: f64, sigma2: f64, params: &GenSchedParams) -> f64 {
    params.gamma_sum() * (sigma2 * normal_pdf(z, mu, sigma2) + (z - mu) * normal_cdf(z, mu, sigma2))
        - params.gamma_s * (z - mu)
}

/// `(alpha'(z), alpha''(z))`.
pub fn alpha_derivs(z: f64, mu: f64, sigma2: f64, params: &GenSchedParams) -> (f64, f64) {
    (
        params.gamma_sum() * normal_cdf(z, mu, sigma2) - params.gamma_s,
        params.gamma_sum() * normal_pdf(z, mu, sigma2),
    )
}

/// Expected cost of one hour under the forecast.
pub fn expected_hour_cost(z: f64, mu: f64, sigma2: f64, params: &GenSchedParams) -> f64 {
    alpha(z, mu, sigma2, params) + 0.5 * ((z - mu).powi(2) + sigma2)
}

/// Expected cost of a schedule.
pub fn expected_cost(z: &DVector<f64>, f: &GaussianForecast, params: &GenSchedParams) -> f64 {
    (0..z.len())
        .map(|i| expected_hour_cost(z[i], f.mu[i], f.sigma2[i], params))
        .sum()
}

/// Ramp rows: `z_i - z_{i-1} <= c_r` for `i = 1..h`, then `z_{i-1} - z_i <= c_r`.
pub fn ramp_constraints(hours: usize, c_r: f64) -> (DMatrix<f64>, DVector<f64>) {
    let m = hours.saturating_sub(1);
    let mut g = DMatrix::zeros(2 * m, hours);
    for i in 0..m {
        g[(i, i + 1)] = 1.0;
        g[(i, i)] = -1.0;
        g[(m + i, i)] = 1.0;
        g[(m + i, i + 1)] = -1.0;
    }
    (g, DVector::from_element(2 * m, c_r))
}

/// Quadratic model of the expected cost around `zk` in absolute coordinates:
/// `Q = diag(alpha''(zk) + 1)`, `c = alpha'(zk) + (zk - mu) - Q zk`.
pub fn sqp_subproblem(
    zk: &DVector<f64>,
    f: &GaussianForecast,
    params: &GenSchedParams,
) -> Result<QuadraticProgram, TaskError> {
    let n = zk.len();
    let mut q = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for i in 0..n {
        let (d1, d2) = alpha_derivs(zk[i], f.mu[i], f.sigma2[i], params);
        q[(i, i)] = d2 + 1.0;
        c[i] = d1 + (zk[i] - f.mu[i]) - q[(i, i)] * zk[i];
    }
    let (g, h) = ramp_constraints(n, params.c_r);
    Ok(QuadraticProgram::new(q, c, g, h, DMatrix::zeros(0, n), DVector::zeros(0))?)
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    pub z: DVector<f64>,
    /// Quadratic model expanded at the converged point and its solution.
    pub qp: QuadraticProgram,
    pub sol: QpSolution,
    /// Expansion point of `qp`.
    pub expansion: DVector<f64>,
    pub iterations: usize,
}

/// Sequential QP with full Newton-type steps. A step that would raise the
/// exact objective is halved until it does not (at most 30 times); iterates
/// after the first subproblem are always ramp-feasible.
pub fn sqp_solve(f: &GaussianForecast, params: &GenSchedParams, opts: &SolverOptions) -> Result<SqpResult, TaskError> {
    let mut zk = f.mu.clone();
    let mut feasible = false;
    for iter in 1..=params.sqp_max_iter {
        let qp = sqp_subproblem(&zk, f, params)?;
        let sol = solve_checked(&qp, opts)?;
        let mut next = sol.z.clone();
        if feasible {
            let base = expected_cost(&zk, f, params);
            let mut t = 1.0;
            for _ in 0..30 {
                if expected_cost(&next, f, params) <= base {
                    break;
                }
                t *= 0.5;
                next = &zk + (&sol.z - &zk) * t;
            }
        }
        let step = (&next - &zk).norm();
        zk = next;
        if feasible && step < params.sqp_delta {
            let qp = sqp_subproblem(&zk, f, params)?;
            let sol = solve_checked(&qp, opts)?;
            return Ok(SqpResult {
                z: sol.z.clone(),
                qp,
                sol,
                expansion: zk,
                iterations: iter,
            });
        }
        feasible = true;
    }
    Err(TaskError::NonConvergence(params.sqp_max_iter))
}

/// Gradients with respect to `(mu, sigma2)` of a loss on the schedule,
/// through the final quadratic model (expansion point held fixed).
pub fn sqp_backward(
    f: &GaussianForecast,
    params: &GenSchedParams,
    res: &SqpResult,
    dl_dz: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), TaskError> {
    let fact = factorize_kkt(&res.qp, &res.sol)?;
    let grads = backward(&res.qp, &fact, dl_dz)?;
    let gs = params.gamma_sum();
    let n = f.mu.len();
    let mut dmu = DVector::zeros(n);
    let mut dsigma2 = DVector::zeros(n);
    for i in 0..n {
        let (z, mu, s2) = (res.expansion[i], f.mu[i], f.sigma2[i]);
        let p = normal_pdf(z, mu, s2);
        let e = z - mu;
        // partials of alpha' and alpha'' at the expansion point
        let d1_mu = -gs * p;
        let d2_mu = gs * p * e / s2;
        let d1_s2 = -gs * p * e / (2.0 * s2);
        let d2_s2 = gs * p * (e * e / (2.0 * s2 * s2) - 1.0 / (2.0 * s2));
        let (dc, dq) = (grads.dc[i], grads.dq[(i, i)]);
        dmu[i] = dc * (d1_mu - 1.0 - d2_mu * z) + dq * d2_mu;
        dsigma2[i] = dc * (d1_s2 - d2_s2 * z) + dq * d2_s2;
    }
    Ok((dmu, dsigma2))
}

pub fn realized_generation_cost(z: &DVector<f64>, y: &DVector<f64>, params: &GenSchedParams) -> f64 {
    z.iter()
        .zip(y.iter())
        .map(|(&z, &y)| params.gamma_s * (y - z).max(0.0) + params.gamma_e * (z - y).max(0.0) + 0.5 * (z - y).powi(2))
        .sum()
}

pub fn realized_generation_cost_grad(z: &DVector<f64>, y: &DVector<f64>, params: &GenSchedParams) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| {
        let (z, y) = (z[i], y[i]);
        let kink = if y > z {
            -params.gamma_s
        } else if z > y {
            params.gamma_e
        } else {
            0.0
        };
        kink + (z - y)
    })
}

/// Scheduling task for a model that predicts hourly means; variances are
/// fixed per hour.
#[derive(Debug, Clone)]
pub struct GenerationTask {
    pub params: GenSchedParams,
    pub sigma2: DVector<f64>,
    pub solver: SolverOptions,
}

impl GenerationTask {
    pub fn new(params: GenSchedParams, sigma2: DVector<f64>) -> Result<Self, TaskError> {
        params.validate()?;
        GaussianForecast::new(DVector::zeros(sigma2.len()), sigma2.clone())?;
        Ok(Self {
            params,
            sigma2,
            solver: SolverOptions::default(),
        })
    }

    fn forecast(&self, mu: &DVector<f64>) -> Result<GaussianForecast, TaskError> {
        GaussianForecast::new(mu.clone(), self.sigma2.clone())
    }
}

impl Task for GenerationTask {
    fn name(&self) -> &'static str {
        "generation"
    }

    fn output_dim(&self) -> usize {
        self.sigma2.len()
    }

    fn decision_dim(&self) -> usize {
        self.sigma2.len()
    }

    fn solve_proxy(&self, out: &DVector<f64>) -> Result<Proxy, TaskError> {
        let res = sqp_solve(&self.forecast(out)?, &self.params, &self.solver)?;
        Ok(Proxy {
            decision: res.z.clone(),
            qp: res.qp,
            sol: res.sol,
        })
    }

    fn backward(&self, out: &DVector<f64>, proxy: &Proxy, dl_dd: &DVector<f64>) -> Result<DVector<f64>, TaskError> {
        // The final model is expanded at a point within the SQP tolerance of
        // its own solution, so the solution doubles as the expansion point.
        let res = SqpResult {
            z: proxy.decision.clone(),
            qp: proxy.qp.clone(),
            sol: proxy.sol.clone(),
            expansion: proxy.decision.clone(),
            iterations: 0,
        };
        Ok(sqp_backward(&self.forecast(out)?, &self.params, &res, dl_dd)?.0)
    }

    fn realized_cost(&self, d: &DVector<f64>, y: &DVector<f64>) -> f64 {
        realized_generation_cost(d, y, &self.params)
    }

    fn realized_cost_grad(&self, d: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        realized_generation_cost_grad(d, y, &self.params)
    }

    fn feasible_set(&self) -> FeasibleSet {
        let n = self.sigma2.len();
        let (g, h) = ramp_constraints(n, self.params.c_r);
        FeasibleSet {
            g,
            h,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        }
    }

    fn likelihood_targets(&self, data: &Dataset) -> FitTargets {
        FitTargets::Values(data.y.clone())
    }

    fn point_prediction(&self, out: &DVector<f64>) -> DVector<f64> {
        out.clone()
    }
}

/// Per-hour mean squared residual of a mean forecaster, floored at
/// [`MIN_VARIANCE`].
pub fn empirical_variance(model: &PredictiveModel, data: &Dataset) -> DVector<f64> {
    let pred = model.predict(&data.x).expect("model width matches data");
    let resid = pred - &data.y;
    DVector::from_fn(resid.ncols(), |j, _| {
        (resid.column(j).norm_squared() / resid.nrows().max(1) as f64).max(MIN_VARIANCE)
    })
}

/// Synthetic daily load series with named features.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadData {
    pub data: Dataset,
    pub feature_names: Vec<String>,
}

fn holiday(doy: usize) -> bool {
    matches!(doy, 0 | 20 | 49 | 146 | 184 | 245 | 314 | 327 | 358)
}

/// Hourly temperature path for `days + 1` days: seasonal and diurnal cycles
/// plus an AR(1) daily anomaly and hourly noise.
pub(crate) fn temperature_path<R: Rng>(r: &mut R, days: usize) -> Vec<[f64; HOURS]> {
    let daily = Normal::new(0.0, 2.5).expect("valid");
    let hourly = Normal::new(0.0, 0.8).expect("valid");
    let mut anomaly = 0.0;
    (0..=days)
        .map(|t| {
            anomaly = 0.7 * anomaly + daily.sample(r);
            let season = 12.0 - 11.0 * (2.0 * PI * (t % 365) as f64 / 365.0).cos();
            std::array::from_fn(|h| {
                season + anomaly + 5.0 * (2.0 * PI * (h as f64 - 9.0) / 24.0).sin() + hourly.sample(r)
            })
        })
        .collect()
}

pub(crate) fn calendar_features(t: usize) -> [f64; 4] {
    let doy = t % 365;
    let angle = 2.0 * PI * doy as f64 / 365.0;
    let weekend = t % 7 >= 5;
    [f64::from(u8::from(weekend)), f64::from(u8::from(holiday(doy))), angle.sin(), angle.cos()]
}

/// Noise-free load level for day `t`, hour `h` at temperature `temp`.
pub(crate) fn base_load(t: usize, h: usize, temp: f64) -> f64 {
    let cal = calendar_features(t);
    let off = cal[0] > 0.0 || cal[1] > 0.0;
    let hf = h as f64;
    let shape = 0.35 * (-(hf - 8.5).powi(2) / 8.0).exp() + 0.55 * (-(hf - 18.5).powi(2) / 10.0).exp()
        - 0.25 * (-(hf - 3.5).powi(2) / 6.0).exp();
    let (shape_scale, offset) = if off { (0.7, -0.25) } else { (1.0, 0.0) };
    2.0 + 0.15 * cal[3] + shape * shape_scale + offset + 0.0025 * (temp - 16.0).powi(2)
}

/// Generates `days` consecutive days. Each sample's features are the previous
/// day's load and temperature, the day's temperature forecast, squared
/// temperature deviations, and calendar flags; targets are the 24 hourly
/// loads. Noise is skewed and its scale grows with the load level and with
/// temperature extremes.
pub fn gen_load_data(days: usize, seed: u64) -> LoadData {
    let mut r = rng(mix_seed(&[seed, 7]));
    let temps = temperature_path(&mut r, days);
    let shock = Normal::new(0.0, 1.0).expect("valid");
    let mut loads: Vec<[f64; HOURS]> = Vec::with_capacity(days + 1);
    let mut carry = 0.0;
    for (t, temp) in temps.iter().enumerate() {
        carry = 0.6 * carry + 0.05 * shock.sample(&mut r);
        let day: [f64; HOURS] = std::array::from_fn(|h| {
            let mean = base_load(t, h, temp[h]) + carry;
            // right-skewed, heteroskedastic noise
            let scale = 0.02 + 0.04 * (mean - 1.5).max(0.0) + 0.004 * (temp[h] - 16.0).abs();
            let e = shock.sample(&mut r);
            mean + scale * (e + 0.35 * (e * e - 1.0))
        });
        loads.push(day);
    }

    let mut names: Vec<String> = Vec::new();
    for prefix in ["load_prev", "temp_prev", "temp_next", "temp_dev_sq"] {
        names.extend((0..HOURS).map(|h| format!("{prefix}_{h}")));
    }
    names.extend(["weekend", "holiday", "year_sin", "year_cos"].map(String::from));
    let x = DMatrix::from_fn(days, names.len(), |i, j| {
        let t = i + 1;
        match j / HOURS {
            0 => loads[t - 1][j % HOURS],
            1 => temps[t - 1][j % HOURS] / 10.0,
            2 => temps[t][j % HOURS] / 10.0,
            3 => ((temps[t][j % HOURS] - 16.0) / 10.0).powi(2),
            _ => calendar_features(t)[j - 4 * HOURS],
        }
    });
    let y = DMatrix::from_fn(days, HOURS, |i, h| loads[i + 1][h]);
    LoadData {
        data: Dataset { x, y, labels: None },
        feature_names: names,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig4() -> GenSchedParams {
        GenSchedParams::default()
    }

    #[test]
    fn alpha_at_the_mean() {
        let a = alpha(1.3, 1.3, 1.0, &fig4());
        assert_abs_diff_eq!(a, 50.5 / (2.0 * PI).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(a, 20.146, epsilon = 1e-3);
        let (d1, d2) = alpha_derivs(1.3, 1.3, 1.0, &fig4());
        assert_eq!(d1, (0.5 - 50.0) / 2.0);
        assert!(d2 > 0.0);
    }

    #[test]
    fn alpha_tail_is_excess_penalty() {
        let z = 40.0;
        assert_abs_diff_eq!(alpha(z, 0.0, 1.0, &fig4()), 0.5 * z, epsilon = 1e-9);
    }

    #[test]
    fn alpha_derivative_matches_differences() {
        let p = fig4();
        for (z, mu, s2) in [(0.3, 0.0, 1.0), (-1.2, 0.5, 0.3), (2.0, 1.9, 0.01)] {
            let h = 1e-6;
            let fd = (alpha(z + h, mu, s2, &p) - alpha(z - h, mu, s2, &p)) / (2.0 * h);
            let (d1, d2) = alpha_derivs(z, mu, s2, &p);
            assert!((d1 - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{d1} vs {fd}");
            let fd2 = (alpha_derivs(z + h, mu, s2, &p).0 - alpha_derivs(z - h, mu, s2, &p).0) / (2.0 * h);
            assert!((d2 - fd2).abs() <= 1e-5 * fd2.abs().max(1.0));
        }
    }

    #[test]
    fn realized_cost_examples() {
        let p = fig4();
        let y = DVector::from_fn(24, |i, _| 1.0 + 0.1 * i as f64);
        assert_eq!(realized_generation_cost(&y, &y, &p), 0.0);
        let mut over = y.clone();
        over[3] += 1.0;
        assert_abs_diff_eq!(realized_generation_cost(&over, &y, &p), 1.0, epsilon = 1e-12);
        let mut under = y.clone();
        under[3] -= 1.0;
        assert_abs_diff_eq!(realized_generation_cost(&under, &y, &p), 50.5, epsilon = 1e-12);
    }

    /// Root of the strictly increasing per-hour derivative by bisection.
    fn bisect_hour(mu: f64, s2: f64, p: &GenSchedParams) -> f64 {
        let grad = |z: f64| alpha_derivs(z, mu, s2, p).0 + (z - mu);
        let (mut lo, mut hi) = (mu - 100.0, mu + 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if grad(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn unconstrained_schedule_matches_bisection() {
        let p = fig4();
        let f = GaussianForecast::new(DVector::from_element(24, 2.0), DVector::from_element(24, 0.04)).unwrap();
        let res = sqp_solve(&f, &p, &SolverOptions::default()).unwrap();
        let oracle = bisect_hour(2.0, 0.04, &p);
        for i in 0..24 {
            assert_abs_diff_eq!(res.z[i], oracle, epsilon = 1e-6);
        }
    }

    #[test]
    fn symmetric_penalties_schedule_the_mean() {
        // validation requires gamma_s > gamma_e, so call the solver directly
        let p = GenSchedParams {
            gamma_e: 5.0,
            gamma_s: 5.0,
            ..fig4()
        };
        let mu = DVector::from_fn(24, |i, _| 1.0 + 0.05 * i as f64);
        let f = GaussianForecast::new(mu.clone(), DVector::from_element(24, 0.2)).unwrap();
        let res = sqp_solve(&f, &p, &SolverOptions::default()).unwrap();
        assert!((res.z - mu).amax() < 1e-6);
    }

    #[test]
    fn steep_profile_binds_ramps() {
        let p = fig4();
        let mu = DVector::from_fn(24, |i, _| if i < 12 { 0.0 } else { 1.0 });
        let f = GaussianForecast::new(mu, DVector::from_element(24, 0.01)).unwrap();
        let res = sqp_solve(&f, &p, &SolverOptions::default()).unwrap();
        let (g, h) = ramp_constraints(24, p.c_r);
        let slack = &h - &g * &res.z;
        assert!(slack.min() > -1e-8);
        let jump = res.z[12] - res.z[11];
        assert_abs_diff_eq!(jump, 0.4, epsilon = 1e-7);
    }

    #[test]
    fn single_hour_sensitivities() {
        // shift invariance gives z*(mu) = mu + const, so dz/dmu = 1
        let p = fig4();
        let (mu, s2) = (0.7, 0.5);
        let solve = |m: f64, v: f64| {
            let f = GaussianForecast::new(DVector::from_element(1, m), DVector::from_element(1, v)).unwrap();
            sqp_solve(&f, &p, &SolverOptions::default()).unwrap()
        };
        let res = solve(mu, s2);
        let f = GaussianForecast::new(DVector::from_element(1, mu), DVector::from_element(1, s2)).unwrap();
        let (dmu, ds2) = sqp_backward(&f, &p, &res, &DVector::from_element(1, 1.0)).unwrap();
        assert_abs_diff_eq!(dmu[0], 1.0, epsilon = 1e-6);
        let h = 1e-5;
        let fd = (solve(mu, s2 + h).z[0] - solve(mu, s2 - h).z[0]) / (2.0 * h);
        assert_abs_diff_eq!(ds2[0], fd, epsilon = 1e-5);
    }

    #[test]
    fn zero_upstream_gradient() {
        let p = fig4();
        let f = GaussianForecast::new(DVector::from_element(24, 1.0), DVector::from_element(24, 0.1)).unwrap();
        let res = sqp_solve(&f, &p, &SolverOptions::default()).unwrap();
        let (dmu, ds) = sqp_backward(&f, &p, &res, &DVector::zeros(24)).unwrap();
        assert_eq!(dmu.amax(), 0.0);
        assert_eq!(ds.amax(), 0.0);
    }

    #[test]
    fn rejects_tiny_variance() {
        assert!(GaussianForecast::new(DVector::zeros(2), DVector::from_element(2, 1e-9)).is_err());
    }

    #[test]
    fn load_data_is_seeded_and_shaped() {
        let a = gen_load_data(30, 3);
        let b = gen_load_data(30, 3);
        assert_eq!(a, b);
        assert_eq!(a.data.x.ncols(), a.feature_names.len());
        assert_eq!(a.data.y.ncols(), 24);
        assert_eq!(a.data.len(), 30);
        // features carry the previous day's load
        assert_eq!(a.data.x[(5, 3)], a.data.y[(4, 3)]);
    }
}
