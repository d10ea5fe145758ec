use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    add_row, check_width, column_sums, softmax_backward, softmax_rows, Gradients, Head,
    LinearModel, ModelError, Mode,
};

pub const HIDDEN_WIDTH: usize = 200;
pub const DROPOUT_RATE: f64 = 0.2;
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// affine -> batch norm -> ReLU -> dropout
#[derive(Debug, Clone, PartialEq)]
struct HiddenBlock {
    weight: DMatrix<f64>,
    bias: DMatrix<f64>,
    gamma: DMatrix<f64>,
    beta: DMatrix<f64>,
    running_mean: DMatrix<f64>,
    running_var: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockCache {
    input: DMatrix<f64>,
    xhat: DMatrix<f64>,
    inv_std: DMatrix<f64>,
    /// post-normalization, pre-ReLU
    normed: DMatrix<f64>,
    /// dropout mask already scaled by 1/(1-p)
    mask: Option<DMatrix<f64>>,
    batch_stats: bool,
}

impl HiddenBlock {
    fn new<R: Rng>(rng: &mut R, input: usize, width: usize) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(width, input, |_, _| rng.gen_range(-bound..bound)),
            bias: DMatrix::from_fn(1, width, |_, _| rng.gen_range(-bound..bound)),
            gamma: DMatrix::from_element(1, width, 1.0),
            beta: DMatrix::zeros(1, width),
            running_mean: DMatrix::zeros(1, width),
            running_var: DMatrix::from_element(1, width, 1.0),
        }
    }

    fn forward(
        &mut self,
        input: &DMatrix<f64>,
        batch_stats: bool,
        dropout: Option<(&mut ChaCha8Rng, f64)>,
    ) -> (DMatrix<f64>, BlockCache) {
        let rows = input.nrows();
        let mut pre = input * self.weight.transpose();
        add_row(&mut pre, &self.bias);

        let (mean, var) = if batch_stats {
            let mean = column_sums(&pre) / rows as f64;
            let var = DMatrix::from_fn(1, pre.ncols(), |_, j| {
                pre.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / rows as f64
            });
            let unbiased = &var * (rows as f64 / (rows as f64 - 1.0));
            self.running_mean = &self.running_mean * (1.0 - BN_MOMENTUM) + &mean * BN_MOMENTUM;
            self.running_var = &self.running_var * (1.0 - BN_MOMENTUM) + unbiased * BN_MOMENTUM;
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std = var.map(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut xhat = pre;
        for mut row in xhat.row_iter_mut() {
            for j in 0..row.len() {
                row[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let mut normed = xhat.clone();
        for mut row in normed.row_iter_mut() {
            for j in 0..row.len() {
                row[j] = self.gamma[j] * row[j] + self.beta[j];
            }
        }
        let mut out = normed.map(|v| v.max(0.0));
        let mask = dropout.map(|(rng, rate)| {
            let keep = 1.0 / (1.0 - rate);
            DMatrix::from_fn(out.nrows(), out.ncols(), |_, _| {
                if rng.gen::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
        });
        if let Some(mask) = &mask {
            out.component_mul_assign(mask);
        }
        let cache = BlockCache {
            input: input.clone(),
            xhat,
            inv_std,
            normed,
            mask,
            batch_stats,
        };
        (out, cache)
    }

    fn predict(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pre = input * self.weight.transpose();
        add_row(&mut pre, &self.bias);
        for mut row in pre.row_iter_mut() {
            for j in 0..row.len() {
                let inv_std = 1.0 / (self.running_var[j] + BN_EPS).sqrt();
                let v = self.gamma[j] * (row[j] - self.running_mean[j]) * inv_std + self.beta[j];
                row[j] = v.max(0.0);
            }
        }
        pre
    }

    /// Returns `(d input, [dW, db, dgamma, dbeta])`.
    fn backward(&self, cache: &BlockCache, dout: &DMatrix<f64>) -> (DMatrix<f64>, [DMatrix<f64>; 4]) {
        let rows = dout.nrows() as f64;
        let mut dnormed = dout.clone();
        if let Some(mask) = &cache.mask {
            dnormed.component_mul_assign(mask);
        }
        dnormed.zip_apply(&cache.normed, |d, y| {
            if y <= 0.0 {
                *d = 0.0
            }
        });
        let dgamma = column_sums(&dnormed.component_mul(&cache.xhat));
        let dbeta = column_sums(&dnormed);
        let mut dxhat = dnormed;
        for mut row in dxhat.row_iter_mut() {
            for j in 0..row.len() {
                row[j] *= self.gamma[j];
            }
        }
        let dpre = if cache.batch_stats {
            let sum_dxhat = column_sums(&dxhat);
            let sum_dxhat_xhat = column_sums(&dxhat.component_mul(&cache.xhat));
            DMatrix::from_fn(dxhat.nrows(), dxhat.ncols(), |i, j| {
                cache.inv_std[j] / rows
                    * (rows * dxhat[(i, j)] - sum_dxhat[j] - cache.xhat[(i, j)] * sum_dxhat_xhat[j])
            })
        } else {
            let mut d = dxhat;
            for mut row in d.row_iter_mut() {
                for j in 0..row.len() {
                    row[j] *= cache.inv_std[j];
                }
            }
            d
        };
        let dw = dpre.tr_mul(&cache.input);
        let db = column_sums(&dpre);
        let dinput = &dpre * &self.weight;
        (dinput, [dw, db, dgamma, dbeta])
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MlpCache {
    blocks: [BlockCache; 2],
    hidden_out: DMatrix<f64>,
    input: DMatrix<f64>,
    out: DMatrix<f64>,
}

/// Two hidden blocks of (affine, batch norm, ReLU, dropout), an output
/// affine layer, an optional residual affine path from inputs to outputs and
/// an optional softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    blocks: [HiddenBlock; 2],
    out_weight: DMatrix<f64>,
    out_bias: DMatrix<f64>,
    residual: Option<LinearModel>,
    pub head: Head,
    pub dropout: f64,
    cache: Option<MlpCache>,
}

impl MlpModel {
    /// Randomly initialized network without residual path.
    pub fn new<R: Rng>(rng: &mut R, input: usize, output: usize, head: Head) -> Self {
        Self::with_width(rng, input, output, HIDDEN_WIDTH, head)
    }

    pub fn with_width<R: Rng>(
        rng: &mut R,
        input: usize,
        output: usize,
        width: usize,
        head: Head,
    ) -> Self {
        let first = HiddenBlock::new(rng, input, width);
        let second = HiddenBlock::new(rng, width, width);
        let bound = 1.0 / (width as f64).sqrt();
        Self {
            blocks: [first, second],
            out_weight: DMatrix::from_fn(output, width, |_, _| rng.gen_range(-bound..bound)),
            out_bias: DMatrix::from_fn(1, output, |_, _| rng.gen_range(-bound..bound)),
            residual: None,
            head,
            dropout: DROPOUT_RATE,
            cache: None,
        }
    }

    /// Adds a residual affine path initialized to `linear` and zeroes the
    /// hidden path's output layer, so the network initially reproduces
    /// `linear` exactly.
    pub fn with_residual(mut self, linear: LinearModel) -> Self {
        assert_eq!(linear.input_dim(), self.input_dim());
        assert_eq!(linear.output_dim(), self.output_dim());
        self.out_weight.fill(0.0);
        self.out_bias.fill(0.0);
        self.residual = Some(LinearModel::new(linear.weight, linear.bias, Head::Identity));
        self
    }

    pub fn has_residual(&self) -> bool {
        self.residual.is_some()
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.out_weight.nrows()
    }

    pub fn hidden_width(&self) -> usize {
        self.out_weight.ncols()
    }

    fn finish(&self, x: &DMatrix<f64>, hidden: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pre = hidden * self.out_weight.transpose();
        add_row(&mut pre, &self.out_bias);
        if let Some(res) = &self.residual {
            pre += x * res.weight.transpose();
            add_row(&mut pre, &res.bias);
        }
        match self.head {
            Head::Identity => pre,
            Head::Softmax => softmax_rows(&pre),
        }
    }

    pub(super) fn forward(&mut self, x: &DMatrix<f64>, mode: Mode) -> Result<DMatrix<f64>, ModelError> {
        check_width(x, self.input_dim())?;
        let (batch_stats, mut rng) = match mode {
            Mode::Train { key } => (x.nrows() > 1, Some(ChaCha8Rng::seed_from_u64(key))),
            Mode::Eval => (false, None),
        };
        let rate = self.dropout;
        let (h1, c1) = self.blocks[0].forward(x, batch_stats, rng.as_mut().map(|r| (r, rate)));
        let (h2, c2) = self.blocks[1].forward(&h1, batch_stats, rng.as_mut().map(|r| (r, rate)));
        let out = self.finish(x, &h2);
        self.cache = Some(MlpCache {
            blocks: [c1, c2],
            hidden_out: h2,
            input: x.clone(),
            out: out.clone(),
        });
        Ok(out)
    }

    pub(super) fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        check_width(x, self.input_dim())?;
        let h1 = self.blocks[0].predict(x);
        let h2 = self.blocks[1].predict(&h1);
        Ok(self.finish(x, &h2))
    }

    pub(super) fn backward(&self, dout: &DMatrix<f64>) -> Result<Gradients, ModelError> {
        let cache = self.cache.as_ref().ok_or(ModelError::NoCachedForward)?;
        let dpre = match self.head {
            Head::Identity => dout.clone(),
            Head::Softmax => softmax_backward(&cache.out, dout),
        };
        let d_out_w = dpre.tr_mul(&cache.hidden_out);
        let d_out_b = column_sums(&dpre);
        let dh2 = &dpre * &self.out_weight;
        let (dh1, g2) = self.blocks[1].backward(&cache.blocks[1], &dh2);
        let (_, g1) = self.blocks[0].backward(&cache.blocks[0], &dh1);
        let mut grads: Gradients = Vec::with_capacity(12);
        grads.extend(g1);
        grads.extend(g2);
        grads.push(d_out_w);
        grads.push(d_out_b);
        if self.residual.is_some() {
            grads.push(dpre.tr_mul(&cache.input));
            grads.push(column_sums(&dpre));
        }
        Ok(grads)
    }

    pub(super) fn params(&self) -> Vec<&DMatrix<f64>> {
        let mut p = Vec::with_capacity(12);
        for b in &self.blocks {
            p.extend([&b.weight, &b.bias, &b.gamma, &b.beta]);
        }
        p.push(&self.out_weight);
        p.push(&self.out_bias);
        if let Some(res) = &self.residual {
            p.push(&res.weight);
            p.push(&res.bias);
        }
        p
    }

    pub(super) fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut p = Vec::with_capacity(12);
        for b in self.blocks.iter_mut() {
            p.extend([&mut b.weight, &mut b.bias, &mut b.gamma, &mut b.beta]);
        }
        p.push(&mut self.out_weight);
        p.push(&mut self.out_bias);
        if let Some(res) = self.residual.as_mut() {
            p.push(&mut res.weight);
            p.push(&mut res.bias);
        }
        p
    }

    pub(super) fn param_names(&self) -> Vec<&'static str> {
        let mut names = vec![
            "hidden1.weight",
            "hidden1.bias",
            "hidden1.gamma",
            "hidden1.beta",
            "hidden2.weight",
            "hidden2.bias",
            "hidden2.gamma",
            "hidden2.beta",
            "output.weight",
            "output.bias",
        ];
        if self.residual.is_some() {
            names.extend(["residual.weight", "residual.bias"]);
        }
        names
    }

    /// Batch-norm running statistics, `[mean1, var1, mean2, var2]`.
    pub fn buffers(&self) -> Vec<&DMatrix<f64>> {
        self.blocks
            .iter()
            .flat_map(|b| [&b.running_mean, &b.running_var])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [&mut b.running_mean, &mut b.running_var])
            .collect()
    }

    /// Empty residual-free shell with the given shapes, used by checkpoint loading.
    pub(super) fn shell(input: usize, output: usize, width: usize, head: Head, residual: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Self::with_width(&mut rng, input, output, width, head);
        if residual {
            m = m.with_residual(LinearModel::zeros(input, output, Head::Identity));
        }
        m
    }
}
