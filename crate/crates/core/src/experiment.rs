//! Seeded experiment sweeps: configuration, per-fold training of every
//! requested method, result CSVs, summaries and long-format plot data.
//!
//! Each (fold, train size) pair is one unit of work. Units run on a rayon
//! pool of the requested width and their rows are sorted before output, so
//! results do not depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{empirical_variance, gen_load_data, GenSchedParams, GenerationTask};
use crate::inventory::{DemandTruth, InventoryParams, InventoryTask, TruthMode};
use crate::models::{fit_linear_regression, FitTargets, Head, LinearModel, MlpModel, ModelError, PredictiveModel};
use crate::random::{mix_seed, rng};
use crate::storage::{gen_price_data, BatteryParams, StorageTask};
use crate::task::{Dataset, Standardizer, Task, TaskError};
use crate::trainer::{
    evaluate, fit_cost_weighted_rmse, fit_likelihood, fit_policy_net, task_loss_train, Predictor, TaskLossReport,
    TrainConfig, TrainError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Inventory,
    Generation,
    Storage,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Inventory => "inventory",
            Self::Generation => "generation",
            Self::Storage => "storage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TrueModel,
    MleLinear,
    MleNonlinear,
    PolicyLinear,
    PolicyNonlinear,
    Rmse,
    CostWeighted,
    TaskLinear,
    TaskNonlinear,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Self::TrueModel,
        Self::MleLinear,
        Self::MleNonlinear,
        Self::PolicyLinear,
        Self::PolicyNonlinear,
        Self::Rmse,
        Self::CostWeighted,
        Self::TaskLinear,
        Self::TaskNonlinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TrueModel => "true_model",
            Self::MleLinear => "mle_linear",
            Self::MleNonlinear => "mle_nonlinear",
            Self::PolicyLinear => "policy_linear",
            Self::PolicyNonlinear => "policy_nonlinear",
            Self::Rmse => "rmse",
            Self::CostWeighted => "cost_weighted",
            Self::TaskLinear => "task_linear",
            Self::TaskNonlinear => "task_nonlinear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    fn id(self) -> u64 {
        self as u64
    }

    pub fn valid_for(self, task: TaskKind) -> bool {
        use Method::*;
        match task {
            TaskKind::Inventory => !matches!(self, Rmse | CostWeighted),
            TaskKind::Generation => self != TrueModel,
            // task losses can be negative, so loss-proportional weights are undefined
            TaskKind::Storage => !matches!(self, TrueModel | CostWeighted),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InventorySettings {
    pub features: usize,
    pub levels: usize,
    pub truth: TruthMode,
    pub test_size: usize,
    pub val_fraction: f64,
    pub params: InventoryParams,
}

impl Default for InventorySettings {
    fn default() -> Self {
        Self {
            features: 20,
            levels: 10,
            truth: TruthMode::Linear,
            test_size: 1000,
            val_fraction: 0.2,
            params: InventoryParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSettings {
    pub test_days: usize,
    pub val_fraction: f64,
    pub params: GenSchedParams,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            test_days: 200,
            val_fraction: 0.2,
            params: GenSchedParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageSettings {
    pub test_days: usize,
    pub val_fraction: f64,
    pub battery: BatteryParams,
    /// `(lambda_flex, eps_health)` pairs; each overrides `battery` and gets
    /// its own task label. Empty means `battery` alone.
    pub grid: Vec<[f64; 2]>,
}

impl Default for StorageSettings {
    fn default() -> Self {
        Self {
            test_days: 150,
            val_fraction: 0.2,
            battery: BatteryParams::default(),
            grid: Vec::new(),
        }
    }
}

impl StorageSettings {
    fn settings(&self) -> Vec<(String, BatteryParams)> {
        if self.grid.is_empty() {
            return vec![("storage".into(), self.battery)];
        }
        self.grid
            .iter()
            .map(|&[l, e]| {
                let p = BatteryParams {
                    lambda_flex: l,
                    eps_health: e,
                    ..self.battery
                };
                (format!("storage:lambda={l}:eps={e}"), p)
            })
            .collect()
    }
}

fn default_finetune() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-4,
        epochs: 10,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub methods: Vec<Method>,
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Inventory: samples including validation. Generation and storage:
    /// days including validation.
    pub train_sizes: Vec<usize>,
    /// Writes measured seconds into `wall_time_s`; off by default so that
    /// reruns produce identical files.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub inventory: InventorySettings,
    #[serde(default)]
    pub generation: GenerationSettings,
    #[serde(default)]
    pub storage: StorageSettings,
    /// Baselines and pretraining.
    #[serde(default)]
    pub train: TrainConfig,
    /// Task fine-tuning from pretrained models (and policy fine-tuning from
    /// pretrained forecasters).
    #[serde(default = "default_finetune")]
    pub finetune: TrainConfig,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{method} failed in fold {fold} (train size {train_size}): {source}")]
    Train {
        method: String,
        fold: usize,
        train_size: usize,
        source: TrainError,
    },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// True for numerical failures (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        !matches!(self, Self::Config(_) | Self::Csv(_))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if let Some(m) = self.methods.iter().find(|m| !m.valid_for(self.task)) {
            return bad(format!("method {} is not available for task {}", m.name(), self.task.name()));
        }
        if self.folds == 0 {
            return bad("folds must be at least 1".into());
        }
        if self.train_sizes.is_empty() {
            return bad("train_sizes must not be empty".into());
        }
        self.train.validate().map_err(ExperimentError::Config)?;
        self.finetune.validate().map_err(ExperimentError::Config)?;
        let val_fraction = match self.task {
            TaskKind::Inventory => {
                let s = &self.inventory;
                s.params.validate().map_err(config_err)?;
                if s.features == 0 || s.levels == 0 || s.test_size == 0 {
                    return bad("inventory features, levels and test_size must be positive".into());
                }
                s.val_fraction
            }
            TaskKind::Generation => {
                self.generation.params.validate().map_err(config_err)?;
                if self.generation.test_days == 0 {
                    return bad("generation test_days must be positive".into());
                }
                self.generation.val_fraction
            }
            TaskKind::Storage => {
                for (_, p) in self.storage.settings() {
                    p.validate().map_err(config_err)?;
                }
                if self.storage.test_days == 0 {
                    return bad("storage test_days must be positive".into());
                }
                self.storage.val_fraction
            }
        };
        if !(val_fraction > 0.0 && val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)".into());
        }
        for &n in &self.train_sizes {
            let val = ((n as f64) * val_fraction).round() as usize;
            if val == 0 || val >= n {
                return bad(format!("train size {n} leaves no training or validation rows"));
            }
        }
        Ok(())
    }
}

fn config_err(e: TaskError) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub method: String,
    pub fold: usize,
    pub train_size: usize,
    pub mean_task_loss: f64,
    pub std_task_loss: f64,
    pub rmse: Option<f64>,
    pub violations: usize,
    pub wall_time_s: f64,
}

pub const RESULT_COLUMNS: [&str; 9] = [
    "task",
    "method",
    "fold",
    "train_size",
    "mean_task_loss",
    "std_task_loss",
    "rmse",
    "violations",
    "wall_time_s",
];

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// Full reports, aligned with `rows`.
    pub reports: Vec<TaskLossReport>,
    /// Diagnostics meant for a log (timings, skipped samples, failures).
    pub notes: Vec<String>,
}

struct Unit {
    fold: usize,
    train_size: usize,
}

struct UnitOutput {
    /// (position of the task setting, label, report)
    results: Vec<(usize, String, TaskLossReport)>,
    notes: Vec<String>,
}

/// Runs every (fold, train size) unit on a pool of `jobs` threads
/// (`None`: rayon's default).
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    let units: Vec<Unit> = (0..cfg.folds)
        .flat_map(|fold| cfg.train_sizes.iter().map(move |&train_size| Unit { fold, train_size }))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| ExperimentError::Config(e.to_string()))?;
    let outputs: Vec<Result<UnitOutput, ExperimentError>> = pool.install(|| {
        units
            .par_iter()
            .map(|u| match cfg.task {
                TaskKind::Inventory => run_inventory_unit(cfg, u),
                TaskKind::Generation => run_generation_unit(cfg, u),
                TaskKind::Storage => run_storage_unit(cfg, u),
            })
            .collect()
    });

    let mut results = Vec::new();
    let mut notes = Vec::new();
    for out in outputs {
        let out = out?;
        results.extend(out.results);
        notes.extend(out.notes);
    }
    results.sort_by(|(ia, _, a), (ib, _, b)| {
        let key = |r: &TaskLossReport| {
            (
                Method::from_name(&r.method).map_or(u64::MAX, Method::id),
                r.train_size,
                r.fold,
            )
        };
        ia.cmp(ib).then(key(a).cmp(&key(b)))
    });
    let rows = results
        .iter()
        .map(|(_, task, r)| ResultRow {
            task: task.clone(),
            method: r.method.clone(),
            fold: r.fold,
            train_size: r.train_size,
            mean_task_loss: r.mean_task_loss,
            std_task_loss: r.std_task_loss,
            rmse: r.rmse,
            violations: r.violations,
            wall_time_s: if cfg.record_wall_time { r.wall_time_s } else { 0.0 },
        })
        .collect();
    Ok(ExperimentOutput {
        rows,
        reports: results.into_iter().map(|(_, _, r)| r).collect(),
        notes,
    })
}

/// Per-method seeds: training shuffles and dropout, and initialization.
fn method_seeds(cfg: &ExperimentConfig, u: &Unit, m: Method) -> (u64, u64) {
    let base = [cfg.seed, u.fold as u64, u.train_size as u64, m.id()];
    (mix_seed(&[base[0], base[1], base[2], base[3], 0]), mix_seed(&[base[0], base[1], base[2], base[3], 1]))
}

fn with_seed(tc: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..tc.clone() }
}

fn train_err(m: Method, u: &Unit) -> impl FnOnce(TrainError) -> ExperimentError + '_ {
    move |source| ExperimentError::Train {
        method: m.name().into(),
        fold: u.fold,
        train_size: u.train_size,
        source,
    }
}

/// Splits `data` into the first `n` rows (then train/validation by
/// `val_fraction`) and the following `test` rows.
fn chronological_split(data: &Dataset, n: usize, test: usize, val_fraction: f64) -> (Dataset, Dataset, Dataset) {
    let head: Vec<usize> = (0..n).collect();
    let tail: Vec<usize> = (n..n + test).collect();
    let (train, val) = data.subset(&head).split_tail(val_fraction);
    (train, val, data.subset(&tail))
}

fn note_report(notes: &mut Vec<String>, label: &str, r: &TaskLossReport, skipped: usize) {
    notes.push(format!(
        "{label} {} fold={} n={} loss={:.6} time={:.2}s skipped={skipped} eval_failures={}",
        r.method, r.fold, r.train_size, r.mean_task_loss, r.wall_time_s, r.failures
    ));
}

fn run_inventory_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<UnitOutput, ExperimentError> {
    let s = &cfg.inventory;
    let truth = DemandTruth::random(s.features, s.levels, s.truth, mix_seed(&[cfg.seed, u.fold as u64]));
    let all = truth.sample(u.train_size, mix_seed(&[cfg.seed, u.fold as u64, u.train_size as u64]));
    let (train, val) = all.split_tail(s.val_fraction);
    let test = truth.sample(s.test_size, mix_seed(&[cfg.seed, u.fold as u64, u64::MAX]));
    let task = InventoryTask::new(s.params, truth.demand.clone())?;
    let (n, k) = (s.features, s.levels);

    let mut out = UnitOutput {
        results: Vec::new(),
        notes: Vec::new(),
    };
    for &m in &cfg.methods {
        let start = Instant::now();
        let (train_seed, init_seed) = method_seeds(cfg, u, m);
        let mut skipped = 0;
        let report = match m {
            Method::TrueModel => {
                let probs = truth.probabilities(&test.x);
                evaluate(Predictor::Outputs(&probs), &task, &test, m.name(), u.fold, u.train_size)
            }
            Method::MleLinear | Method::MleNonlinear | Method::TaskLinear | Method::TaskNonlinear => {
                // task arms start from exactly the model the matching MLE arm ends with
                let linear = matches!(m, Method::MleLinear | Method::TaskLinear);
                let mle = if linear { Method::MleLinear } else { Method::MleNonlinear };
                let (mle_seed, mle_init) = method_seeds(cfg, u, mle);
                let mut r = rng(mle_init);
                let mut model = if linear {
                    PredictiveModel::Linear(LinearModel::random(&mut r, n, k, Head::Softmax))
                } else {
                    PredictiveModel::Mlp(MlpModel::new(&mut r, n, k, Head::Softmax))
                };
                fit_likelihood(&mut model, &task, &train, &val, &with_seed(&cfg.train, mle_seed))
                    .map_err(train_err(m, u))?;
                if m != mle {
                    let ft = with_seed(&cfg.finetune, train_seed);
                    skipped = task_loss_train(&mut model, &task, &train, &val, &ft).map_err(train_err(m, u))?.skipped;
                }
                evaluate(Predictor::Model(&model), &task, &test, m.name(), u.fold, u.train_size)
            }
            Method::PolicyLinear | Method::PolicyNonlinear => {
                let mut r = rng(init_seed);
                let mut model = if m == Method::PolicyLinear {
                    PredictiveModel::Linear(LinearModel::random(&mut r, n, 1, Head::Identity))
                } else {
                    PredictiveModel::Mlp(MlpModel::new(&mut r, n, 1, Head::Identity))
                };
                let tc = with_seed(&cfg.train, train_seed);
                skipped = fit_policy_net(&mut model, &task, &train, &val, &tc).map_err(train_err(m, u))?.skipped;
                evaluate(Predictor::Policy(&model), &task, &test, m.name(), u.fold, u.train_size)
            }
            Method::Rmse | Method::CostWeighted => unreachable!("rejected by validation"),
        };
        let report = TaskLossReport {
            wall_time_s: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
            ..report
        };
        note_report(&mut out.notes, "inventory", &report, skipped);
        out.results.push((0, "inventory".into(), report));
    }
    Ok(out)
}

/// Standardized splits plus the least-squares linear forecaster and a
/// residual network pretrained on the likelihood targets of `task`.
struct Forecasters {
    train: Dataset,
    val: Dataset,
    test: Dataset,
    linear: LinearModel,
    rmse_net: PredictiveModel,
    pretrain_time: f64,
}

fn pretrain<T: Task>(
    cfg: &ExperimentConfig,
    u: &Unit,
    data: &Dataset,
    test_days: usize,
    val_fraction: f64,
    task: &T,
) -> Result<Forecasters, ExperimentError> {
    let start = Instant::now();
    let (train, val, test) = chronological_split(data, u.train_size, test_days, val_fraction);
    let scaler = Standardizer::fit(&train.x);
    let (train, val, test) = (scaler.apply(&train), scaler.apply(&val), scaler.apply(&test));
    let targets = match task.likelihood_targets(&train) {
        FitTargets::Values(y) => y,
        FitTargets::Classes(_) => unreachable!("forecasting tasks regress values"),
    };
    let linear = fit_linear_regression(&train.x, &targets).map_err(|e| match e {
        ModelError::RankDeficient => ExperimentError::Config(format!(
            "{} training rows cannot determine a linear forecast on {} features; raise train_sizes",
            train.len(),
            train.x.ncols()
        )),
        e => e.into(),
    })?;
    let (train_seed, init_seed) = method_seeds(cfg, u, Method::Rmse);
    let mut rmse_net = PredictiveModel::Mlp(
        MlpModel::new(&mut rng(init_seed), train.x.ncols(), targets.ncols(), Head::Identity).with_residual(linear.clone()),
    );
    fit_likelihood(&mut rmse_net, task, &train, &val, &with_seed(&cfg.train, train_seed))
        .map_err(train_err(Method::Rmse, u))?;
    Ok(Forecasters {
        train,
        val,
        test,
        linear,
        rmse_net,
        pretrain_time: start.elapsed().as_secs_f64(),
    })
}

/// Trains and scores one forecasting method given the shared forecasters.
fn forecasting_method<T: Task>(
    cfg: &ExperimentConfig,
    u: &Unit,
    m: Method,
    task: &T,
    f: &Forecasters,
) -> Result<(TaskLossReport, usize), ExperimentError> {
    let (train_seed, init_seed) = method_seeds(cfg, u, m);
    let ft = with_seed(&cfg.finetune, train_seed);
    let linear = PredictiveModel::Linear(f.linear.clone());
    let (model, skipped, policy) = match m {
        Method::MleLinear => (linear, 0, false),
        Method::Rmse => (f.rmse_net.clone(), 0, false),
        Method::MleNonlinear => {
            // plain network without the residual path
            let mut model = PredictiveModel::Mlp(MlpModel::new(
                &mut rng(init_seed),
                f.train.x.ncols(),
                task.output_dim(),
                Head::Identity,
            ));
            fit_likelihood(&mut model, task, &f.train, &f.val, &with_seed(&cfg.train, train_seed))
                .map_err(train_err(m, u))?;
            (model, 0, false)
        }
        Method::CostWeighted => {
            // same initialization as the plain residual network
            let (_, rmse_init) = method_seeds(cfg, u, Method::Rmse);
            let mut model = PredictiveModel::Mlp(
                MlpModel::new(&mut rng(rmse_init), f.train.x.ncols(), task.output_dim(), Head::Identity)
                    .with_residual(f.linear.clone()),
            );
            fit_cost_weighted_rmse(&mut model, task, &f.train, &f.val, &with_seed(&cfg.train, train_seed))
                .map_err(train_err(m, u))?;
            (model, 0, false)
        }
        Method::TaskLinear | Method::TaskNonlinear => {
            let mut model = if m == Method::TaskLinear { linear } else { f.rmse_net.clone() };
            let h = task_loss_train(&mut model, task, &f.train, &f.val, &ft).map_err(train_err(m, u))?;
            (model, h.skipped, false)
        }
        Method::PolicyLinear | Method::PolicyNonlinear => {
            let nonlinear = m == Method::PolicyNonlinear;
            // the forecasters are a warm start only when a forecast has the
            // shape of a decision; otherwise train from scratch
            let (mut model, tc) = if task.decision_dim() == task.output_dim() {
                (if nonlinear { f.rmse_net.clone() } else { linear }, ft)
            } else {
                let (mut r, n, d) = (rng(init_seed), f.train.x.ncols(), task.decision_dim());
                let model = if nonlinear {
                    PredictiveModel::Mlp(MlpModel::new(&mut r, n, d, Head::Identity))
                } else {
                    PredictiveModel::Linear(LinearModel::random(&mut r, n, d, Head::Identity))
                };
                (model, with_seed(&cfg.train, train_seed))
            };
            let h = fit_policy_net(&mut model, task, &f.train, &f.val, &tc).map_err(train_err(m, u))?;
            (model, h.skipped, true)
        }
        Method::TrueModel => unreachable!("rejected by validation"),
    };
    let predictor = if policy { Predictor::Policy(&model) } else { Predictor::Model(&model) };
    Ok((evaluate(predictor, task, &f.test, m.name(), u.fold, u.train_size), skipped))
}

fn run_generation_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<UnitOutput, ExperimentError> {
    let s = &cfg.generation;
    let data = gen_load_data(u.train_size + s.test_days, mix_seed(&[cfg.seed, u.fold as u64])).data;
    // variances are only needed once the forecaster exists
    let placeholder = GenerationTask::new(s.params, nalgebra::DVector::from_element(data.y.ncols(), 1.0))?;
    let f = pretrain(cfg, u, &data, s.test_days, s.val_fraction, &placeholder)?;
    let sigma2 = empirical_variance(&f.rmse_net, &f.val);
    let task = GenerationTask::new(s.params, sigma2)?;
    let mut out = UnitOutput {
        results: Vec::new(),
        notes: vec![format!(
            "generation fold={} n={} pretrain={:.2}s",
            u.fold, u.train_size, f.pretrain_time
        )],
    };
    for &m in &cfg.methods {
        let start = Instant::now();
        let (report, skipped) = forecasting_method(cfg, u, m, &task, &f)?;
        let report = TaskLossReport {
            wall_time_s: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
            ..report
        };
        note_report(&mut out.notes, "generation", &report, skipped);
        out.results.push((0, "generation".into(), report));
    }
    Ok(out)
}

fn run_storage_unit(cfg: &ExperimentConfig, u: &Unit) -> Result<UnitOutput, ExperimentError> {
    let s = &cfg.storage;
    let data = gen_price_data(u.train_size + s.test_days, mix_seed(&[cfg.seed, u.fold as u64])).data;
    let settings = s.settings();
    // the forecaster does not depend on the battery weights
    let first = StorageTask::new(settings[0].1)?;
    let f = pretrain(cfg, u, &data, s.test_days, s.val_fraction, &first)?;
    let mut out = UnitOutput {
        results: Vec::new(),
        notes: vec![format!("storage fold={} n={} pretrain={:.2}s", u.fold, u.train_size, f.pretrain_time)],
    };
    for (index, (label, params)) in settings.into_iter().enumerate() {
        let task = StorageTask::new(params)?;
        for &m in &cfg.methods {
            let start = Instant::now();
            let (report, skipped) = forecasting_method(cfg, u, m, &task, &f)?;
            let report = TaskLossReport {
                wall_time_s: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
                ..report
            };
            note_report(&mut out.notes, &label, &report, skipped);
            out.results.push((index, label.clone(), report));
        }
    }
    Ok(out)
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<(), ExperimentError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(RESULT_COLUMNS)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != RESULT_COLUMNS {
        return Err(ExperimentError::Config(format!("unexpected results header: {}", header.join(","))));
    }
    rd.deserialize().map(|r| r.map_err(ExperimentError::from)).collect()
}

/// Mean and sample standard deviation over folds of one method's mean task
/// loss (and RMSE where defined).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub task: String,
    pub method: String,
    pub train_size: usize,
    pub folds: usize,
    pub mean: f64,
    pub std: f64,
    pub rmse_mean: Option<f64>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    // task labels keep their order of first appearance
    let mut labels: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, u64, usize), (String, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let pos = labels.iter().position(|t| *t == r.task).unwrap_or_else(|| {
            labels.push(&r.task);
            labels.len() - 1
        });
        let order = Method::from_name(&r.method).map_or(u64::MAX, Method::id);
        let e = groups
            .entry((pos, order, r.train_size))
            .or_insert_with(|| (r.method.clone(), Vec::new(), Vec::new()));
        e.1.push(r.mean_task_loss);
        if let Some(v) = r.rmse {
            e.2.push(v);
        }
    }
    groups
        .into_iter()
        .map(|((pos, _, train_size), (method, losses, rmses))| {
            let (mean, std) = mean_std(&losses);
            SummaryRow {
                task: labels[pos].to_string(),
                method,
                train_size,
                folds: losses.len(),
                mean,
                std,
                rmse_mean: (!rmses.is_empty()).then(|| mean_std(&rmses).0),
            }
        })
        .collect()
}

/// Human-readable summary: one line per method, then a forecaster-versus-
/// task-net comparison wherever both `rmse` and `task_nonlinear` ran.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<34} {:<17} {:>10} {:>24} {:>12}", "task", "method", "train_size", "task loss (mean ± std)", "rmse");
    for r in summary {
        let rmse = r.rmse_mean.map_or("-".to_string(), |v| format!("{v:.4}"));
        let loss = format!("{:.4} ± {:.4}", r.mean, r.std);
        let _ = writeln!(s, "{:<34} {:<17} {:>10} {:>24} {:>12}", r.task, r.method, r.train_size, loss, rmse);
    }
    let find = |task: &str, n: usize, m: Method| summary.iter().find(|r| r.task == task && r.train_size == n && r.method == m.name());
    let mut header = false;
    for r in summary.iter().filter(|r| r.method == Method::Rmse.name()) {
        let Some(t) = find(&r.task, r.train_size, Method::TaskNonlinear) else {
            continue;
        };
        if !header {
            let _ = writeln!(s, "\n{:<34} {:>10} {:>22} {:>22} {:>14}", "task", "train_size", "RMSE net", "task-based net", "% improvement");
            header = true;
        }
        let improvement = (r.mean - t.mean) / r.mean.abs();
        let _ = writeln!(
            s,
            "{:<34} {:>10} {:>22} {:>22} {:>14.2}",
            r.task,
            r.train_size,
            format!("{:.2} ± {:.2}", r.mean, r.std),
            format!("{:.2} ± {:.2}", t.mean, t.std),
            improvement
        );
    }
    s
}

pub const PLOT_COLUMNS: [&str; 6] = ["task", "method", "train_size", "fold", "metric", "value"];

/// Long-format rewrite of a results CSV: one row per (result row, metric).
/// Metrics without a value (RMSE of a policy) are omitted.
pub fn emit_plot_data<R: Read, W: Write>(results: R, w: W) -> Result<usize, ExperimentError> {
    let rows = read_results_csv(results)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PLOT_COLUMNS)?;
    let mut written = 0;
    for r in &rows {
        let metrics = [
            ("mean_task_loss", Some(r.mean_task_loss)),
            ("std_task_loss", Some(r.std_task_loss)),
            ("rmse", r.rmse),
            ("violations", Some(r.violations as f64)),
            ("wall_time_s", Some(r.wall_time_s)),
        ];
        for (name, value) in metrics {
            if let Some(v) = value {
                out.write_record([
                    r.task.clone(),
                    r.method.clone(),
                    r.train_size.to_string(),
                    r.fold.to_string(),
                    name.to_string(),
                    v.to_string(),
                ])?;
                written += 1;
            }
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(written)
}

/// Rows of one method's per-fold losses keyed by fold, for paired tests.
pub fn fold_losses(rows: &[ResultRow], task: &str, method: &str, train_size: usize) -> BTreeMap<usize, f64> {
    rows.iter()
        .filter(|r| r.task == task && r.method == method && r.train_size == train_size)
        .map(|r| (r.fold, r.mean_task_loss))
        .collect()
}
