//! Predictive models: a linear layer and a two-hidden-layer network with
//! batch normalization, dropout and an optional residual path, plus Adam and
//! likelihood / least-squares fitting.

mod adam;
mod checkpoint;
mod fit;
mod linear;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use fit::{
    fit_linear_regression, fit_mle, likelihood_batch, likelihood_loss, train_loop, FitConfig, FitHistory,
    FitTargets,
};
pub use linear::LinearModel;
pub use mlp::{MlpModel, DROPOUT_RATE, HIDDEN_WIDTH};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("input width {got} does not match model width {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backward called without a cached forward pass")]
    NoCachedForward,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("linear regression system is rank deficient")]
    RankDeficient,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

/// Output transformation applied after the last affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Identity,
    Softmax,
}

/// Forward mode. Training mode draws dropout masks from a counter-based
/// stream keyed by `key` and normalizes with batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { key: u64 },
    Eval,
}

/// Per-parameter gradients, in the order of [`PredictiveModel::params`].
pub type Gradients = Vec<DMatrix<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveModel {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl PredictiveModel {
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Linear(m) => m.input_dim(),
            Self::Mlp(m) => m.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Linear(m) => m.output_dim(),
            Self::Mlp(m) => m.output_dim(),
        }
    }

    pub fn head(&self) -> Head {
        match self {
            Self::Linear(m) => m.head,
            Self::Mlp(m) => m.head,
        }
    }

    /// Batch forward (rows are samples); caches activations for [`Self::backward`].
    pub fn forward(&mut self, x: &DMatrix<f64>, mode: Mode) -> Result<DMatrix<f64>, ModelError> {
        match self {
            Self::Linear(m) => m.forward(x),
            Self::Mlp(m) => m.forward(x, mode),
        }
    }

    /// Eval-mode forward without touching any cache.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        match self {
            Self::Linear(m) => m.predict(x),
            Self::Mlp(m) => m.predict(x),
        }
    }

    /// Gradients of `sum(dout .* out)` for the cached forward pass.
    pub fn backward(&self, dout: &DMatrix<f64>) -> Result<Gradients, ModelError> {
        match self {
            Self::Linear(m) => m.backward(dout),
            Self::Mlp(m) => m.backward(dout),
        }
    }

    pub fn params(&self) -> Vec<&DMatrix<f64>> {
        match self {
            Self::Linear(m) => m.params(),
            Self::Mlp(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        match self {
            Self::Linear(m) => m.params_mut(),
            Self::Mlp(m) => m.params_mut(),
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            Self::Linear(_) => LinearModel::PARAM_NAMES.to_vec(),
            Self::Mlp(m) => m.param_names(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// All parameters concatenated (column-major per tensor).
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for p in self.params_mut() {
            let len = p.len();
            p.as_mut_slice().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
    }
}

pub fn flatten_gradients(grads: &Gradients) -> Vec<f64> {
    grads.iter().flat_map(|g| g.iter().copied()).collect()
}

pub(crate) fn check_width(x: &DMatrix<f64>, expected: usize) -> Result<(), ModelError> {
    if x.ncols() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Backward through a row-wise softmax: `p .* (dp - <dp, p>)`.
pub fn softmax_backward(probs: &DMatrix<f64>, dprobs: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = dprobs.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let p = probs.row(i);
        let inner = row.dot(&p);
        for (j, v) in row.iter_mut().enumerate() {
            *v = p[j] * (*v - inner);
        }
    }
    out
}

/// Adds `bias` (1 x k) to every row.
pub(crate) fn add_row(m: &mut DMatrix<f64>, bias: &DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        row += bias;
    }
}

pub(crate) fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_normalized_and_positive() {
        let logits = DMatrix::from_row_slice(2, 3, &[1000.0, -1000.0, 0.0, 0.1, 0.2, 0.3]);
        let p = softmax_rows(&logits);
        for row in p.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        let p = softmax_rows(&DMatrix::zeros(1, 4));
        let mut dp = DMatrix::zeros(1, 4);
        dp[(0, 2)] = -1.0 / p[(0, 2)];
        let dlogits = softmax_backward(&p, &dp);
        for j in 0..4 {
            let expected = 0.25 - if j == 2 { 1.0 } else { 0.0 };
            assert!((dlogits[(0, j)] - expected).abs() < 1e-12);
        }
    }
}
