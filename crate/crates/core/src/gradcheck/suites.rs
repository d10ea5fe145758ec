//! Seeded gradient-check suites: each draws random instances of one analytic
//! gradient path and compares it against central differences of the composed
//! map, re-solving every optimization problem per perturbation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{check, finite_diff, flatten_grads, flatten_qp, tight_solver, unflatten_qp, GradCheckReport};
use super::{DEFAULT_ATOL, DEFAULT_RTOL, DEFAULT_STEP, RESOLVE_RTOL};
use crate::diff::{backward, factorize_kkt};
use crate::generation::{
    realized_generation_cost, realized_generation_cost_grad, sqp_backward, sqp_solve, sqp_subproblem, GaussianForecast,
    GenSchedParams, SqpResult,
};
use crate::inventory::{InventoryParams, InventoryTask};
use crate::models::{flatten_gradients, softmax_backward, softmax_rows, Head, LinearModel, MlpModel, Mode, PredictiveModel};
use crate::qp::{solve_qp, QpSolution, QuadraticProgram};
use crate::random::{mix_seed, normal_matrix, normal_vector, random_feasible_qp, rng};
use crate::storage::{BatteryParams, StorageTask, FLEX_GRID};
use crate::task::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Qp,
    Inventory,
    Generation,
    Storage,
    Models,
    All,
}

impl Scope {
    pub const NAMES: [&'static str; 6] = ["qp", "inventory", "generation", "storage", "models", "all"];

    fn suites(self) -> Vec<Suite> {
        use Suite::*;
        match self {
            Self::Qp => vec![QpData],
            Self::Inventory => vec![InventoryChain],
            Self::Generation => vec![GenerationSubproblem, GenerationSqp],
            Self::Storage => vec![StorageChain],
            Self::Models => vec![ModelParams],
            Self::All => vec![
                QpData,
                InventoryChain,
                GenerationSubproblem,
                GenerationSqp,
                StorageChain,
                ModelParams,
            ],
        }
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "qp" => Self::Qp,
            "inventory" => Self::Inventory,
            "generation" => Self::Generation,
            "storage" => Self::Storage,
            "models" => Self::Models,
            "all" => Self::All,
            _ => return Err(format!("unknown scope {s:?}; expected one of {}", Self::NAMES.join(", "))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Suite {
    QpData,
    InventoryChain,
    GenerationSubproblem,
    GenerationSqp,
    StorageChain,
    ModelParams,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Self::QpData => "qp",
            Self::InventoryChain => "inventory",
            Self::GenerationSubproblem => "generation-subproblem",
            Self::GenerationSqp => "generation-sqp",
            Self::StorageChain => "storage",
            Self::ModelParams => "models",
        }
    }

    fn id(self) -> u64 {
        self as u64
    }

    fn rtol(self) -> f64 {
        match self {
            Self::GenerationSqp => RESOLVE_RTOL,
            _ => DEFAULT_RTOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Passing instances required per suite.
    pub cases: usize,
    /// Draws allowed per required instance before the suite gives up.
    pub attempts_per_case: usize,
    /// Test hook: perturbs every analytic gradient, so every case must fail.
    pub corrupt: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            cases: 20,
            attempts_per_case: 5,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub suite: &'static str,
    /// Seed of the instance, reproducible on its own.
    pub seed: u64,
    pub rtol: f64,
    pub report: GradCheckReport,
    pub analytic: f64,
    pub numeric: f64,
}

impl CaseResult {
    /// How far the worst coordinate is outside the pass region (> 1 fails).
    pub fn severity(&self) -> f64 {
        let abs = (self.analytic - self.numeric).abs();
        let denom = self.analytic.abs().max(self.numeric.abs());
        let rel = if denom > 0.0 { abs / denom } else { 0.0 };
        (rel / self.rtol).min(abs / DEFAULT_ATOL)
    }
}

impl fmt::Display for CaseResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} seed={} coord={} analytic={:.6e} numeric={:.6e} max_rel={:.2e} max_abs={:.2e} {}",
            self.suite,
            self.seed,
            self.report.worst_index,
            self.analytic,
            self.numeric,
            self.report.max_rel_err,
            self.report.max_abs_err,
            if self.report.passed { "ok" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub suite: &'static str,
    pub passed: usize,
    pub failed: usize,
    /// Draws rejected before comparison (degenerate or failed solves).
    pub rejected: usize,
    pub required: usize,
    pub seconds: f64,
}

impl SuiteSummary {
    pub fn ok(&self) -> bool {
        self.failed == 0 && self.passed >= self.required
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteOutcome {
    pub summaries: Vec<SuiteSummary>,
    pub cases: Vec<CaseResult>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        !self.summaries.is_empty() && self.summaries.iter().all(SuiteSummary::ok)
    }

    /// Up to `k` cases ordered from worst to best.
    pub fn worst(&self, k: usize) -> Vec<&CaseResult> {
        let mut all: Vec<&CaseResult> = self.cases.iter().collect();
        all.sort_by(|a, b| b.severity().total_cmp(&a.severity()));
        all.truncate(k);
        all
    }
}

/// Analytic and numeric gradient of one instance, or why it was rejected.
type Drawn = Result<(Vec<f64>, Vec<f64>), String>;

pub fn run_suites(scope: Scope, seed: u64, opts: &SuiteOptions) -> SuiteOutcome {
    let mut outcome = SuiteOutcome::default();
    for suite in scope.suites() {
        let start = Instant::now();
        let mut summary = SuiteSummary {
            suite: suite.name(),
            passed: 0,
            failed: 0,
            rejected: 0,
            required: opts.cases,
            seconds: 0.0,
        };
        let mut next = 0u64;
        let budget = (opts.cases * opts.attempts_per_case.max(1)) as u64;
        while summary.passed + summary.failed < opts.cases && next < budget {
            // draw a batch of candidates in parallel, keep them in seed order
            let want = (opts.cases - summary.passed - summary.failed) as u64;
            let seeds: Vec<u64> = (next..(next + want).min(budget))
                .map(|i| mix_seed(&[seed, suite.id(), i]))
                .collect();
            next += seeds.len() as u64;
            let drawn: Vec<(u64, Drawn)> = seeds.par_iter().map(|&s| (s, draw(suite, s))).collect();
            for (s, d) in drawn {
                match d {
                    Ok((mut analytic, numeric)) => {
                        if opts.corrupt {
                            analytic[0] += 1e-2 * (1.0 + analytic[0].abs());
                        }
                        let report = check(&analytic, &numeric, suite.rtol(), DEFAULT_ATOL);
                        let i = report.worst_index;
                        if report.passed {
                            summary.passed += 1;
                        } else {
                            summary.failed += 1;
                        }
                        outcome.cases.push(CaseResult {
                            suite: suite.name(),
                            seed: s,
                            rtol: suite.rtol(),
                            analytic: analytic[i],
                            numeric: numeric[i],
                            report,
                        });
                    }
                    Err(_) => summary.rejected += 1,
                }
            }
        }
        summary.seconds = start.elapsed().as_secs_f64();
        outcome.summaries.push(summary);
    }
    outcome
}

fn draw(suite: Suite, seed: u64) -> Drawn {
    match suite {
        Suite::QpData => qp_case(seed),
        Suite::InventoryChain => inventory_case(seed),
        Suite::GenerationSubproblem => generation_case(seed, false),
        Suite::GenerationSqp => generation_case(seed, true),
        Suite::StorageChain => storage_case(seed),
        Suite::ModelParams => model_case(seed),
    }
}

fn numeric<F: FnMut(&[f64]) -> f64>(f: F, x: &[f64]) -> Result<Vec<f64>, String> {
    finite_diff(f, x, DEFAULT_STEP).map_err(|e| e.to_string())
}

/// Linear functional of the argmin in every QP datum.
fn qp_case(seed: u64) -> Drawn {
    let mut r = rng(seed);
    let n = r.gen_range(2..=10);
    let m = r.gen_range(0..=15);
    let p = r.gen_range(0..=n.min(4) - 1);
    let qp = random_feasible_qp(&mut r, n, m, p);
    let w = normal_vector(&mut r, n);
    let opts = tight_solver();
    let sol = solve_qp(&qp, &opts);
    if !sol.is_optimal() {
        return Err(format!("{:?}", sol.status));
    }
    let fact = factorize_kkt(&qp, &sol).map_err(|e| e.to_string())?;
    let grads = backward(&qp, &fact, &w).map_err(|e| e.to_string())?;
    let num = numeric(
        |t| match unflatten_qp(&qp, t) {
            Ok(perturbed) => w.dot(&solve_qp(&perturbed, &opts).z),
            Err(_) => f64::NAN,
        },
        &flatten_qp(&qp),
    )?;
    Ok((flatten_grads(&grads), num))
}

/// Logits -> softmax -> newsvendor QP -> realized cost at a random demand.
fn inventory_case(seed: u64) -> Drawn {
    let mut r = rng(seed);
    let k = r.gen_range(5..=12);
    let mut levels: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..10.0)).collect();
    levels.sort_by(f64::total_cmp);
    let params = InventoryParams {
        c0: r.gen_range(5.0..15.0),
        q0: r.gen_range(1.0..4.0),
        cb: r.gen_range(20.0..40.0),
        qb: r.gen_range(1.0..4.0),
        ch: r.gen_range(1.0..4.0),
        qh: r.gen_range(0.5..2.0),
    };
    let mut task = InventoryTask::new(params, DVector::from_vec(levels)).map_err(|e| e.to_string())?;
    task.solver = tight_solver();
    let logits = normal_vector(&mut r, k);
    let y = DVector::from_element(1, r.gen_range(0.0..10.0));
    let probs = |l: &[f64]| softmax_rows(&DMatrix::from_row_slice(1, k, l)).row(0).transpose();
    let p = probs(logits.as_slice());
    let proxy = task.solve_proxy(&p).map_err(|e| e.to_string())?;
    // An order exactly at a demand level is a kink of the expected cost: the
    // active rows are dependent, the order is locally constant, and the
    // differences only measure solver noise.
    if task.demand.iter().any(|d| (proxy.decision[0] - d).abs() < 1e-7) {
        return Err("order at a demand level".into());
    }
    let dl_dd = task.realized_cost_grad(&proxy.decision, &y);
    let dp = task.backward(&p, &proxy, &dl_dd).map_err(|e| e.to_string())?;
    let p_row = DMatrix::from_row_slice(1, k, p.as_slice());
    let dlogits = softmax_backward(&p_row, &DMatrix::from_row_slice(1, k, dp.as_slice()));
    let num = numeric(
        |l| {
            task.solve_proxy(&probs(l))
                .map_or(f64::NAN, |px| task.realized_cost(&px.decision, &y))
        },
        logits.as_slice(),
    )?;
    Ok((dlogits.iter().copied().collect(), num))
}

fn random_forecast<R: Rng>(r: &mut R, hours: usize) -> Result<GaussianForecast, String> {
    let level = r.gen_range(1.0..3.0);
    let mu = DVector::from_fn(hours, |i, _| {
        level + 0.8 * (i as f64 * std::f64::consts::PI / 12.0).sin() + 0.3 * r.sample::<f64, _>(StandardNormal)
    });
    let sigma2 = DVector::from_fn(hours, |_, _| r.gen_range(0.01..0.3));
    GaussianForecast::new(mu, sigma2).map_err(|e| e.to_string())
}

/// Forecast `(mu, sigma2)` -> schedule -> realized cost. With `full` the whole
/// sequential solve is re-run per perturbation; otherwise the final quadratic
/// model is differenced with its expansion point held fixed.
fn generation_case(seed: u64, full: bool) -> Drawn {
    let mut r = rng(seed);
    let hours = if full { r.gen_range(6..=24) } else { 24 };
    let params = GenSchedParams::default();
    let f = random_forecast(&mut r, hours)?;
    let y = DVector::from_fn(hours, |i, _| f.mu[i] + f.sigma2[i].sqrt() * r.sample::<f64, _>(StandardNormal));
    let opts = tight_solver();
    let res = sqp_solve(&f, &params, &opts).map_err(|e| e.to_string())?;
    let res = if full {
        // the training path: expansion taken at the returned schedule
        SqpResult {
            expansion: res.z.clone(),
            ..res
        }
    } else {
        res
    };
    let dl_dz = realized_generation_cost_grad(&res.z, &y, &params);
    let (dmu, dsigma2) = sqp_backward(&f, &params, &res, &dl_dz).map_err(|e| e.to_string())?;
    let theta: Vec<f64> = f.mu.iter().chain(f.sigma2.iter()).copied().collect();
    let split = |t: &[f64]| GaussianForecast::new(DVector::from_column_slice(&t[..hours]), DVector::from_column_slice(&t[hours..]));
    let num = numeric(
        |t| {
            let Ok(g) = split(t) else { return f64::NAN };
            let z = if full {
                sqp_solve(&g, &params, &opts).map(|s| s.z)
            } else {
                sqp_subproblem(&res.expansion, &g, &params).map(|qp| solve_qp(&qp, &opts).z)
            };
            z.map_or(f64::NAN, |z| realized_generation_cost(&z, &y, &params))
        },
        &theta,
    )?;
    Ok((dmu.iter().chain(dsigma2.iter()).copied().collect(), num))
}

/// Rows whose multiplier exceeds their slack.
fn active_set(qp: &QuadraticProgram, sol: &QpSolution) -> Vec<bool> {
    let slack = qp.slack(&sol.z);
    sol.lambda.iter().zip(slack.iter()).map(|(l, s)| l > s).collect()
}

/// Whether the active inequality rows and the equality rows fail to be
/// linearly independent.
fn dependent_active_rows(qp: &QuadraticProgram, sol: &QpSolution) -> bool {
    let active: Vec<usize> = active_set(qp, sol)
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| a.then_some(i))
        .collect();
    let n = qp.num_vars();
    let rows = active.len() + qp.num_eq();
    if rows > n {
        return true;
    }
    if rows == 0 {
        return false;
    }
    let mut jac = DMatrix::zeros(rows, n);
    for (r, &i) in active.iter().enumerate() {
        jac.set_row(r, &qp.g().row(i));
    }
    jac.view_mut((active.len(), 0), (qp.num_eq(), n)).copy_from(qp.a());
    let sv = jac.svd(false, false).singular_values;
    sv.min() <= 1e-9 * sv.max()
}

/// Log-price forecast -> battery QP -> realized cost under random prices.
fn storage_case(seed: u64) -> Drawn {
    let mut r = rng(seed);
    let (lambda, eps) = FLEX_GRID[r.gen_range(0..FLEX_GRID.len())];
    let mut task = StorageTask::new(BatteryParams::with_weights(lambda, eps)).map_err(|e| e.to_string())?;
    task.solver = tight_solver();
    let h = task.hours;
    let out = DVector::from_fn(h, |_, _| 3.4 + 0.5 * r.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(h, |_, _| (3.4 + 0.6 * r.sample::<f64, _>(StandardNormal)).exp());
    let proxy = task.solve_proxy(&out).map_err(|e| e.to_string())?;
    // e.g. a battery that stays full through an idle hour: the multipliers
    // are not unique and the argmin has only one-sided derivatives
    if dependent_active_rows(&proxy.qp, &proxy.sol) {
        return Err("linearly dependent active rows".into());
    }
    if !proxy.sol.polished {
        return Err("no exact active-set solution".into());
    }
    let dl_dd = task.realized_cost_grad(&proxy.decision, &y);
    let dout = task.backward(&out, &proxy, &dl_dd).map_err(|e| e.to_string())?;
    let nominal = active_set(&proxy.qp, &proxy.sol);
    let mut switched = false;
    let num = numeric(
        |t| match task.solve_proxy(&DVector::from_column_slice(t)) {
            Ok(px) => {
                switched |= !px.sol.polished || active_set(&px.qp, &px.sol) != nominal;
                task.realized_cost(&px.decision, &y)
            }
            Err(_) => f64::NAN,
        },
        out.as_slice(),
    )?;
    // The nearly linear objective puts many rows close to their switching
    // point; across a switch the map is only piecewise smooth. Interior-point
    // accuracy alone is too coarse for differences of prices near 30, so
    // every stencil point must also be an exact active-set solution.
    if switched {
        return Err("active set changes within the difference stencil".into());
    }
    Ok((dout.iter().copied().collect(), num))
}

/// Eval-mode model parameters -> weighted sum of outputs.
fn model_case(seed: u64) -> Drawn {
    let mut r = rng(seed);
    let input = r.gen_range(2..=6);
    let output = r.gen_range(1..=5);
    let head = if r.gen_bool(0.5) { Head::Identity } else { Head::Softmax };
    let mut model = match r.gen_range(0..3) {
        0 => PredictiveModel::Linear(LinearModel::random(&mut r, input, output, head)),
        1 => PredictiveModel::Mlp(MlpModel::with_width(&mut r, input, output, 8, head)),
        _ => {
            let linear = LinearModel::random(&mut r, input, output, Head::Identity);
            PredictiveModel::Mlp(MlpModel::with_width(&mut r, input, output, 8, head).with_residual(linear))
        }
    };
    // nonzero everywhere, including the residual network's output layer
    let theta: Vec<f64> = (0..model.num_params()).map(|_| 0.5 * r.sample::<f64, _>(StandardNormal)).collect();
    model.set_flat_params(&theta);
    let x = normal_matrix(&mut r, 6, input);
    for key in 0..3 {
        // move batch-norm running statistics off their initial values
        model.forward(&x, Mode::Train { key }).map_err(|e| e.to_string())?;
    }
    let w = normal_matrix(&mut r, 6, output);
    model.forward(&x, Mode::Eval).map_err(|e| e.to_string())?;
    let analytic = flatten_gradients(&model.backward(&w).map_err(|e| e.to_string())?);
    let theta = model.flat_params();
    let mut probe = model.clone();
    let num = numeric(
        |t| {
            probe.set_flat_params(t);
            probe.predict(&x).map_or(f64::NAN, |out| out.dot(&w))
        },
        &theta,
    )?;
    Ok((analytic, num))
}
