use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::{adam_step, AdamConfig, AdamState, Gradients, Head, LinearModel, ModelError, Mode, PredictiveModel};
use crate::random::{mix_seed, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: Option<usize>,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    /// Validation runs after every `eval_every` epochs and after the last one;
    /// patience counts validation runs.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            patience: Some(10),
            max_steps: None,
            eval_every: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitHistory {
    /// Mean minibatch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss per epoch (training loss when there is no validation
    /// data, NaN on epochs without validation).
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub steps: usize,
}

/// Generic minibatch Adam loop over `num_train` samples.
///
/// `batch_grad(model, indices, mode)` runs forward and backward on the given
/// sample indices and returns the batch loss with its parameter gradients.
/// `val_loss(model, epoch)` returns `None` when there is no validation data. The
/// parameters with the best validation loss are restored at the end.
pub fn train_loop<F, V, E>(
    model: &mut PredictiveModel,
    num_train: usize,
    cfg: &FitConfig,
    mut batch_grad: F,
    mut val_loss: V,
) -> Result<FitHistory, E>
where
    F: FnMut(&mut PredictiveModel, &[usize], Mode) -> Result<(f64, Gradients), E>,
    V: FnMut(&PredictiveModel, usize) -> Option<f64>,
{
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(&model.params());
    let mut history = FitHistory::default();
    let mut best: Option<(f64, PredictiveModel)> = None;
    let mut since_best = 0;
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..num_train).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng(mix_seed(&[cfg.seed, epoch as u64])));
        let mut total = 0.0;
        let mut count = 0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            if cfg.max_steps.is_some_and(|m| history.steps >= m) {
                break;
            }
            let key = mix_seed(&[cfg.seed, epoch as u64, b as u64]);
            let (loss, grads) = batch_grad(model, chunk, Mode::Train { key })?;
            adam_step(&mut model.params_mut(), &grads, &mut state, &adam);
            history.steps += 1;
            total += loss * chunk.len() as f64;
            count += chunk.len();
        }
        if count == 0 {
            break;
        }
        let train = total / count as f64;
        history.train_loss.push(train);
        let out_of_steps = cfg.max_steps.is_some_and(|m| history.steps >= m);
        let last = epoch + 1 == cfg.epochs || out_of_steps;
        if (epoch + 1) % cfg.eval_every.max(1) != 0 && !last {
            history.val_loss.push(f64::NAN);
            continue;
        }
        let val = val_loss(model, epoch).unwrap_or(train);
        history.val_loss.push(val);
        if best.as_ref().map_or(true, |(b, _)| val < *b) {
            best = Some((val, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
        if out_of_steps {
            break;
        }
    }
    if let Some((_, snapshot)) = best {
        *model = snapshot;
    }
    Ok(history)
}

/// Likelihood targets: class indices for a softmax model (cross-entropy) or
/// real values for an identity-head model (squared error).
#[derive(Debug, Clone, PartialEq)]
pub enum FitTargets {
    Classes(Vec<usize>),
    Values(DMatrix<f64>),
}

impl FitTargets {
    pub fn len(&self) -> usize {
        match self {
            Self::Classes(c) => c.len(),
            Self::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-sample loss and its gradient with respect to the model output rows.
fn likelihood_terms(out: &DMatrix<f64>, targets: &FitTargets, rows: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let mut dout = DMatrix::zeros(out.nrows(), out.ncols());
    let losses = match targets {
        FitTargets::Classes(c) => rows
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let p = out[(i, c[r])].max(1e-300);
                dout[(i, c[r])] = -1.0 / p;
                -p.ln()
            })
            .collect(),
        FitTargets::Values(v) => rows
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut l = 0.0;
                for j in 0..out.ncols() {
                    let e = out[(i, j)] - v[(r, j)];
                    dout[(i, j)] = e;
                    l += 0.5 * e * e;
                }
                l
            })
            .collect(),
    };
    (losses, dout)
}

/// Weighted batch-mean likelihood loss for output rows `out` of samples
/// `rows`, and its gradient with respect to `out`.
pub fn likelihood_batch(
    out: &DMatrix<f64>,
    targets: &FitTargets,
    rows: &[usize],
    weights: Option<&[f64]>,
) -> (f64, DMatrix<f64>) {
    let (losses, mut dout) = likelihood_terms(out, targets, rows);
    let scale = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for (i, &r) in rows.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[r]) * scale;
        loss += w * losses[i];
        dout.row_mut(i).scale_mut(w);
    }
    (loss, dout)
}

/// Unweighted mean likelihood loss in eval mode; `None` for no rows.
pub fn likelihood_loss(model: &PredictiveModel, x: &DMatrix<f64>, targets: &FitTargets, rows: &[usize]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let out = model.predict(&x.select_rows(rows)).ok()?;
    let (losses, _) = likelihood_terms(&out, targets, rows);
    Some(losses.iter().sum::<f64>() / rows.len() as f64)
}

/// Fits by maximum likelihood (cross-entropy for class targets, mean squared
/// error for value targets), optionally weighting training samples. Rows in
/// `val` are held out for model selection on the unweighted loss.
pub fn fit_mle(
    model: &mut PredictiveModel,
    x: &DMatrix<f64>,
    targets: &FitTargets,
    weights: Option<&[f64]>,
    train: &[usize],
    val: &[usize],
    cfg: &FitConfig,
) -> Result<FitHistory, ModelError> {
    if train.is_empty() || targets.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if let FitTargets::Classes(_) = targets {
        assert_eq!(model.head(), Head::Softmax, "class targets need a softmax head");
    }
    let batch_grad = |m: &mut PredictiveModel, idx: &[usize], mode: Mode| {
        let rows: Vec<usize> = idx.iter().map(|&i| train[i]).collect();
        let out = m.forward(&x.select_rows(&rows), mode)?;
        let (loss, dout) = likelihood_batch(&out, targets, &rows, weights);
        Ok((loss, m.backward(&dout)?))
    };
    let val_loss = |m: &PredictiveModel, _| likelihood_loss(m, x, targets, val);
    train_loop(model, train.len(), cfg, batch_grad, val_loss)
}

/// Least squares with an intercept via ridge-stabilized (1e-8) normal equations.
pub fn fit_linear_regression(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LinearModel, ModelError> {
    let (rows, cols) = (x.nrows(), x.ncols() + 1);
    if rows == 0 {
        return Err(ModelError::EmptyDataset);
    }
    if rows < cols {
        return Err(ModelError::RankDeficient);
    }
    let aug = DMatrix::from_fn(rows, cols, |i, j| if j < x.ncols() { x[(i, j)] } else { 1.0 });
    let mut gram = aug.tr_mul(&aug);
    for i in 0..cols {
        gram[(i, i)] += 1e-8;
    }
    let rhs = aug.tr_mul(y);
    let sol = gram.cholesky().ok_or(ModelError::RankDeficient)?.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::RankDeficient);
    }
    let weight = sol.rows(0, x.ncols()).transpose();
    let bias = sol.rows(x.ncols(), 1).into_owned();
    Ok(LinearModel::new(weight, bias, Head::Identity))
}
