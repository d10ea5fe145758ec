//! Task-loss training, the likelihood / least-squares / policy baselines and
//! test-set evaluation.

use std::cell::{Cell, RefCell};
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::solve_backward;
use crate::models::{
    likelihood_batch, likelihood_loss, train_loop, FitConfig, FitHistory, Gradients, ModelError, Mode,
    PredictiveModel,
};
use crate::task::{solve_checked, Dataset, FeasibleSet, Task, TaskError};

/// Fraction of an epoch's samples whose proxy solve may fail before training aborts.
pub const MAX_SKIP_FRACTION: f64 = 0.1;

/// How realized constraint violations enter the training gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// Objective gradient plus `penalty_weight` times the gradient of every
    /// violated constraint.
    Penalty,
    /// Step in the most violated constraint instead of the objective.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub penalty_weight: f64,
    /// Weight on the likelihood gradient; 0 is pure task loss.
    pub nll_mix: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub patience: usize,
    pub max_steps: Option<usize>,
    pub constraint_mode: ConstraintMode,
    /// Epochs between sample reweightings for cost-weighted least squares.
    pub reweight_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            penalty_weight: 100.0,
            nll_mix: 0.0,
            seed: 0,
            eval_every: 1,
            patience: 10,
            max_steps: None,
            constraint_mode: ConstraintMode::Penalty,
            reweight_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0) {
            return Err("learning_rate must be positive".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.nll_mix) {
            return Err("nll_mix must lie in [0, 1]".into());
        }
        if self.penalty_weight < 0.0 {
            return Err("penalty_weight must be nonnegative".into());
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.learning_rate,
            patience: (self.patience > 0).then_some(self.patience),
            max_steps: self.max_steps,
            eval_every: self.eval_every.max(1),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{skipped} of {total} samples failed in epoch {epoch}; last error: {last}")]
    TooManySkipped {
        epoch: usize,
        skipped: usize,
        total: usize,
        last: TaskError,
    },
    #[error("empty dataset")]
    EmptyDataset,
}

/// Per-epoch record written to the training-history CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_task_loss: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub steps: usize,
    pub skipped: usize,
}

impl TrainHistory {
    fn from_fit(fit: &FitHistory, val_rmse: &[(usize, f64)], skipped: usize) -> Self {
        let rows = fit
            .train_loss
            .iter()
            .enumerate()
            .map(|(epoch, &train_loss)| HistoryRow {
                epoch,
                train_loss,
                val_task_loss: fit.val_loss.get(epoch).copied().unwrap_or(f64::NAN),
                rmse: val_rmse
                    .iter()
                    .find(|(e, _)| *e == epoch)
                    .map_or(f64::NAN, |(_, r)| *r),
            })
            .collect();
        Self {
            rows,
            best_epoch: fit.best_epoch,
            steps: fit.steps,
            skipped,
        }
    }
}

pub fn write_history_csv<W: Write>(history: &TrainHistory, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "train_loss", "val_task_loss", "rmse"])?;
    for r in &history.rows {
        out.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_task_loss.to_string(),
            r.rmse.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Constraint handling applied to per-sample decision gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyOptions {
    pub weight: f64,
    pub mode: ConstraintMode,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        Self {
            weight: TrainConfig::default().penalty_weight,
            mode: ConstraintMode::Penalty,
        }
    }
}

/// Realized loss (cost plus penalties) and its gradient in the decision.
fn decision_loss<T: Task + ?Sized>(
    task: &T,
    feasible: &FeasibleSet,
    d: &DVector<f64>,
    y: &DVector<f64>,
    pen: PenaltyOptions,
) -> (f64, DVector<f64>) {
    let mut loss = task.realized_cost(d, y);
    let mut grad = task.realized_cost_grad(d, y);
    let violated = feasible.violations(d);
    if violated.is_empty() {
        return (loss, grad);
    }
    loss += pen.weight * violated.iter().map(|(a, _)| a).sum::<f64>();
    match pen.mode {
        ConstraintMode::Penalty => {
            for (_, g) in &violated {
                grad += g * pen.weight;
            }
        }
        ConstraintMode::Step => {
            let worst = violated
                .iter()
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .expect("nonempty");
            grad = &worst.1 * pen.weight;
        }
    }
    (loss, grad)
}

/// Per-sample task loss and gradient with respect to the model output row.
fn task_sample<T: Task + ?Sized>(
    task: &T,
    feasible: &FeasibleSet,
    out: &DVector<f64>,
    y: &DVector<f64>,
    pen: PenaltyOptions,
) -> Result<(f64, DVector<f64>), TaskError> {
    let proxy = task.solve_proxy(out)?;
    let (loss, grad) = decision_loss(task, feasible, &proxy.decision, y, pen);
    let dout = task.backward(out, &proxy, &grad)?;
    Ok((loss, dout))
}

fn row(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    m.row(i).transpose()
}

/// Mean task loss over rows and the gradient matrix (rows scaled by
/// `1/successes`). Failed rows get zero gradient.
struct BatchTerms {
    loss: f64,
    dout: DMatrix<f64>,
    failures: Vec<TaskError>,
}

fn task_batch_terms<T: Task + ?Sized>(
    task: &T,
    out: &DMatrix<f64>,
    y: &DMatrix<f64>,
    pen: PenaltyOptions,
) -> BatchTerms {
    let feasible = task.feasible_set();
    let results: Vec<_> = (0..out.nrows())
        .into_par_iter()
        .map(|i| task_sample(task, &feasible, &row(out, i), &row(y, i), pen))
        .collect();
    let ok = results.iter().filter(|r| r.is_ok()).count().max(1) as f64;
    let mut dout = DMatrix::zeros(out.nrows(), out.ncols());
    let mut loss = 0.0;
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((l, g)) => {
                loss += l / ok;
                dout.row_mut(i).copy_from(&(g / ok).transpose());
            }
            Err(e) => failures.push(e),
        }
    }
    BatchTerms { loss, dout, failures }
}

/// Mean realized task loss of a batch and its parameter gradient. Any proxy
/// failure is returned as an error.
pub fn task_gradient<T: Task + ?Sized>(
    task: &T,
    model: &mut PredictiveModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    mode: Mode,
) -> Result<(f64, Gradients), TaskError> {
    let out = model
        .forward(x, mode)
        .map_err(|e| TaskError::InvalidInput(e.to_string()))?;
    let mut terms = task_batch_terms(task, &out, y, PenaltyOptions::default());
    if let Some(e) = terms.failures.pop() {
        return Err(e);
    }
    let grads = model
        .backward(&terms.dout)
        .map_err(|e| TaskError::InvalidInput(e.to_string()))?;
    Ok((terms.loss, grads))
}

/// Counts failures per epoch from the sequence of batch calls.
struct SkipCounter {
    batches_per_epoch: usize,
    samples_per_epoch: usize,
    calls: Cell<usize>,
    epoch_skipped: Cell<usize>,
    total: Cell<usize>,
}

impl SkipCounter {
    fn new(num_train: usize, batch: usize) -> Self {
        Self {
            batches_per_epoch: num_train.div_ceil(batch.max(1)).max(1),
            samples_per_epoch: num_train,
            calls: Cell::new(0),
            epoch_skipped: Cell::new(0),
            total: Cell::new(0),
        }
    }

    fn record(&self, mut failures: Vec<TaskError>) -> Result<(), TrainError> {
        let call = self.calls.get();
        if call % self.batches_per_epoch == 0 {
            self.epoch_skipped.set(0);
        }
        self.calls.set(call + 1);
        let skipped = self.epoch_skipped.get() + failures.len();
        self.epoch_skipped.set(skipped);
        self.total.set(self.total.get() + failures.len());
        if skipped as f64 > MAX_SKIP_FRACTION * self.samples_per_epoch as f64 {
            return Err(TrainError::TooManySkipped {
                epoch: call / self.batches_per_epoch,
                skipped,
                total: self.samples_per_epoch,
                last: failures.pop().expect("failures are nonempty when over budget"),
            });
        }
        Ok(())
    }
}

/// What produces the decision for an evaluated sample.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// Distribution model; decisions come from the proxy problem.
    Model(&'a PredictiveModel),
    /// Fixed model outputs (for example the true distribution), one row per sample.
    Outputs(&'a DMatrix<f64>),
    /// Direct policy; outputs are projected onto the feasible set.
    Policy(&'a PredictiveModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskLossReport {
    pub method: String,
    pub fold: usize,
    pub train_size: usize,
    pub mean_task_loss: f64,
    /// Sample standard deviation over the test set.
    pub std_task_loss: f64,
    pub rmse: Option<f64>,
    /// Decisions violating a deterministic constraint by more than the tolerance.
    pub violations: usize,
    /// Samples whose proxy or projection solve failed; excluded from the mean.
    pub failures: usize,
    pub wall_time_s: f64,
    /// Per-sample realized losses in test-set order (NaN for failures).
    pub losses: Vec<f64>,
}

/// Projects `u` onto the feasible set; returns the point and, when the set
/// has constraints, the projection QP and its solution for backpropagation.
fn project(
    feasible: &FeasibleSet,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, Option<(crate::qp::QuadraticProgram, crate::qp::QpSolution)>), TaskError> {
    if feasible.g.nrows() == 0 && feasible.a.nrows() == 0 {
        return Ok((u.clone(), None));
    }
    let qp = feasible.projection_qp(u)?;
    let sol = solve_checked(&qp, &crate::qp::SolverOptions::default())?;
    Ok((sol.z.clone(), Some((qp, sol))))
}

/// Policy loss: realized cost at the projected decision plus
/// `weight/2 * |u - proj(u)|^2`, which keeps a gradient on outputs the
/// projection clamps.
fn policy_sample<T: Task + ?Sized>(
    task: &T,
    feasible: &FeasibleSet,
    u: &DVector<f64>,
    y: &DVector<f64>,
    pen: PenaltyOptions,
) -> Result<(f64, DVector<f64>), TaskError> {
    let (d, proj) = project(feasible, u)?;
    let (loss, grad) = decision_loss(task, feasible, &d, y, pen);
    let du = match proj {
        None => grad,
        // c = -u in the projection problem
        Some((qp, sol)) => -solve_backward(&qp, &sol, &grad)?.dc,
    };
    let gap = u - &d;
    Ok((loss + 0.5 * pen.weight * gap.norm_squared(), du + gap * pen.weight))
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Per-sample realized losses, decisions' feasibility and point forecasts.
fn score<T: Task + ?Sized>(predictor: Predictor<'_>, task: &T, data: &Dataset) -> Vec<Result<(f64, bool, Option<DVector<f64>>), TaskError>> {
    let feasible = task.feasible_set();
    let outputs = match predictor {
        Predictor::Model(m) | Predictor::Policy(m) => m.predict(&data.x).map_err(|e| TaskError::InvalidInput(e.to_string())),
        Predictor::Outputs(o) => Ok(o.clone()),
    };
    let outputs = match outputs {
        Ok(o) => o,
        Err(e) => return vec![Err(e); data.len()],
    };
    let policy = matches!(predictor, Predictor::Policy(_));
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let out = row(&outputs, i);
            let y = row(&data.y, i);
            let (d, point) = if policy {
                (project(&feasible, &out)?.0, None)
            } else {
                (task.solve_proxy(&out)?.decision, Some(task.point_prediction(&out)))
            };
            let loss = task.realized_cost(&d, &y);
            Ok((loss, feasible.is_feasible(&d), point))
        })
        .collect()
}

/// Scores a method on a test set.
pub fn evaluate<T: Task + ?Sized>(
    predictor: Predictor<'_>,
    task: &T,
    test: &Dataset,
    method: &str,
    fold: usize,
    train_size: usize,
) -> TaskLossReport {
    let start = Instant::now();
    let scored = score(predictor, task, test);
    let mut losses = Vec::with_capacity(scored.len());
    let (mut violations, mut failures) = (0, 0);
    let mut sq_err = 0.0;
    let mut sq_count = 0usize;
    let mut has_point = false;
    for (i, s) in scored.iter().enumerate() {
        match s {
            Ok((loss, feasible, point)) => {
                losses.push(*loss);
                violations += usize::from(!feasible);
                if let Some(p) = point {
                    has_point = true;
                    let y = row(&test.y, i);
                    sq_err += (p - y).norm_squared();
                    sq_count += p.len();
                }
            }
            Err(_) => {
                losses.push(f64::NAN);
                failures += 1;
            }
        }
    }
    let ok: Vec<f64> = losses.iter().copied().filter(|v| !v.is_nan()).collect();
    let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
    TaskLossReport {
        method: method.to_string(),
        fold,
        train_size,
        mean_task_loss: mean,
        std_task_loss: sample_std(&ok, mean),
        rmse: (has_point && sq_count > 0).then(|| (sq_err / sq_count as f64).sqrt()),
        violations,
        failures,
        wall_time_s: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
        losses,
    }
}

/// Mean task loss and RMSE on a validation set, ignoring failed samples.
fn validation_metrics<T: Task + ?Sized>(predictor: Predictor<'_>, task: &T, val: &Dataset) -> (f64, f64) {
    let r = evaluate(predictor, task, val, "validation", 0, 0);
    (r.mean_task_loss, r.rmse.unwrap_or(f64::NAN))
}

fn check_nonempty(train: &Dataset) -> Result<(), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(())
}

/// Trains a distribution model on realized task loss, optionally blended
/// with the likelihood gradient (`nll_mix`). Validation selects on mean task
/// loss. With `nll_mix = 1` the update sequence is exactly that of
/// likelihood fitting.
pub fn task_loss_train<T: Task + ?Sized>(
    model: &mut PredictiveModel,
    task: &T,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    check_nonempty(train)?;
    let fit = cfg.fit_config();
    let pen = PenaltyOptions {
        weight: cfg.penalty_weight,
        mode: cfg.constraint_mode,
    };
    let mix = cfg.nll_mix;
    let targets = (mix > 0.0).then(|| task.likelihood_targets(train));
    let skips = SkipCounter::new(train.len(), cfg.batch_size);
    let rmse_log = RefCell::new(Vec::new());

    let batch_grad = |m: &mut PredictiveModel, idx: &[usize], mode: Mode| -> Result<(f64, Gradients), TrainError> {
        let out = m.forward(&train.x.select_rows(idx), mode)?;
        let task_part = (mix < 1.0).then(|| task_batch_terms(task, &out, &train.y.select_rows(idx), pen));
        let nll_part = targets.as_ref().map(|t| likelihood_batch(&out, t, idx, None));
        let (loss, dout) = match (task_part, nll_part) {
            (Some(t), None) => {
                skips.record(t.failures)?;
                (t.loss, t.dout)
            }
            (None, Some(n)) => n,
            (Some(t), Some((nl, nd))) => {
                skips.record(t.failures)?;
                ((1.0 - mix) * t.loss + mix * nl, t.dout * (1.0 - mix) + nd * mix)
            }
            (None, None) => unreachable!("nll_mix lies in [0, 1]"),
        };
        Ok((loss, m.backward(&dout)?))
    };
    let val_loss = |m: &PredictiveModel, epoch: usize| {
        if val.is_empty() {
            return None;
        }
        let (loss, rmse) = validation_metrics(Predictor::Model(m), task, val);
        rmse_log.borrow_mut().push((epoch, rmse));
        Some(loss)
    };
    let hist = train_loop(model, train.len(), &fit, batch_grad, val_loss)?;
    let log = rmse_log.take();
    Ok(TrainHistory::from_fit(&hist, &log, skips.total.get()))
}

/// Trains a direct policy `x -> decision` on realized task loss through the
/// Euclidean projection onto the feasible set.
pub fn fit_policy_net<T: Task + ?Sized>(
    model: &mut PredictiveModel,
    task: &T,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    check_nonempty(train)?;
    assert_eq!(model.output_dim(), task.decision_dim(), "policy output must match decision width");
    let fit = cfg.fit_config();
    let pen = PenaltyOptions {
        weight: cfg.penalty_weight,
        mode: cfg.constraint_mode,
    };
    let feasible = task.feasible_set();
    let skips = SkipCounter::new(train.len(), cfg.batch_size);
    let batch_grad = |m: &mut PredictiveModel, idx: &[usize], mode: Mode| -> Result<(f64, Gradients), TrainError> {
        let out = m.forward(&train.x.select_rows(idx), mode)?;
        let results: Vec<_> = idx
            .par_iter()
            .enumerate()
            .map(|(i, &r)| policy_sample(task, &feasible, &row(&out, i), &row(&train.y, r), pen))
            .collect();
        let ok = results.iter().filter(|r| r.is_ok()).count().max(1) as f64;
        let mut dout = DMatrix::zeros(out.nrows(), out.ncols());
        let mut loss = 0.0;
        let mut failures = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok((l, g)) => {
                    loss += l / ok;
                    dout.row_mut(i).copy_from(&(g / ok).transpose());
                }
                Err(e) => failures.push(e),
            }
        }
        skips.record(failures)?;
        Ok((loss, m.backward(&dout)?))
    };
    let val_loss = |m: &PredictiveModel, _| (!val.is_empty()).then(|| validation_metrics(Predictor::Policy(m), task, val).0);
    let hist = train_loop(model, train.len(), &fit, batch_grad, val_loss)?;
    Ok(TrainHistory::from_fit(&hist, &[], skips.total.get()))
}

/// Turns per-sample losses into weights with mean 1, clipped to `[0.1, 10]`
/// and renormalized until both hold (up to rounding).
pub fn normalize_weights(losses: &[f64]) -> Vec<f64> {
    let n = losses.len();
    let mean = losses.iter().sum::<f64>() / n as f64;
    if n == 0 || !(mean.is_finite() && mean > 0.0) {
        return vec![1.0; n];
    }
    let mut w: Vec<f64> = losses.iter().map(|l| l / mean).collect();
    for _ in 0..100 {
        w.iter_mut().for_each(|v| *v = v.clamp(0.1, 10.0));
        let m = w.iter().sum::<f64>() / n as f64;
        w.iter_mut().for_each(|v| *v /= m);
        if w.iter().all(|v| (0.1 - 1e-12..=10.0 + 1e-12).contains(v)) {
            break;
        }
    }
    w
}

/// Shared least-squares / likelihood loop; `weights` is re-read every batch.
fn likelihood_train<T: Task + ?Sized>(
    model: &mut PredictiveModel,
    task: &T,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    weights: Option<&RefCell<Vec<f64>>>,
    mut on_eval: impl FnMut(&PredictiveModel, usize),
) -> Result<TrainHistory, TrainError> {
    check_nonempty(train)?;
    let targets = task.likelihood_targets(train);
    let val_targets = task.likelihood_targets(val);
    let val_rows: Vec<usize> = (0..val.len()).collect();
    let batch_grad = |m: &mut PredictiveModel, idx: &[usize], mode: Mode| -> Result<(f64, Gradients), TrainError> {
        let out = m.forward(&train.x.select_rows(idx), mode)?;
        let w = weights.map(|w| w.borrow());
        let (loss, dout) = likelihood_batch(&out, &targets, idx, w.as_deref().map(|v| v.as_slice()));
        Ok((loss, m.backward(&dout)?))
    };
    let val_loss = |m: &PredictiveModel, epoch: usize| {
        on_eval(m, epoch);
        likelihood_loss(m, &val.x, &val_targets, &val_rows)
    };
    let hist = train_loop(model, train.len(), &cfg.fit_config(), batch_grad, val_loss)?;
    Ok(TrainHistory::from_fit(&hist, &[], 0))
}

/// Maximum likelihood (classes) or least squares (values) with early stopping
/// on the validation likelihood.
pub fn fit_likelihood<T: Task + ?Sized>(
    model: &mut PredictiveModel,
    task: &T,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    likelihood_train(model, task, train, val, cfg, None, |_, _| {})
}

/// Least squares whose sample weights are reset from realized task losses
/// after every `reweight_every` epochs (see [`normalize_weights`]).
pub fn fit_cost_weighted_rmse<T: Task + ?Sized>(
    model: &mut PredictiveModel,
    task: &T,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    let weights = RefCell::new(vec![1.0; train.len()]);
    let period = cfg.reweight_every.max(1);
    let mut cfg = cfg.clone();
    cfg.eval_every = 1;
    let reweight = |m: &PredictiveModel, epoch: usize| {
        if (epoch + 1) % period != 0 {
            return;
        }
        let losses: Vec<f64> = score(Predictor::Model(m), task, train)
            .into_iter()
            .map(|r| r.map_or(f64::NAN, |(l, _, _)| l))
            .collect();
        let finite_mean = {
            let ok: Vec<f64> = losses.iter().copied().filter(|v| v.is_finite()).collect();
            ok.iter().sum::<f64>() / ok.len().max(1) as f64
        };
        // failed samples keep an average weight
        let filled: Vec<f64> = losses.iter().map(|l| if l.is_finite() { *l } else { finite_mean }).collect();
        *weights.borrow_mut() = normalize_weights(&filled);
    };
    likelihood_train(model, task, train, val, &cfg, Some(&weights), reweight)
}
