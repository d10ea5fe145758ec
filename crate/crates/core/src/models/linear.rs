use nalgebra::DMatrix;
use rand::Rng;

use super::{add_row, check_width, column_sums, softmax_backward, softmax_rows, Gradients, Head, ModelError};

/// One affine layer `out = W x + bias`, optionally followed by a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `out x in`
    pub weight: DMatrix<f64>,
    /// `1 x out`
    pub bias: DMatrix<f64>,
    pub head: Head,
    cache: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl LinearModel {
    pub const PARAM_NAMES: [&'static str; 2] = ["weight", "bias"];

    pub fn new(weight: DMatrix<f64>, bias: DMatrix<f64>, head: Head) -> Self {
        assert_eq!(bias.nrows(), 1);
        assert_eq!(bias.ncols(), weight.nrows());
        Self {
            weight,
            bias,
            head,
            cache: None,
        }
    }

    pub fn zeros(input: usize, output: usize, head: Head) -> Self {
        Self::new(DMatrix::zeros(output, input), DMatrix::zeros(1, output), head)
    }

    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` initialization.
    pub fn random<R: Rng>(rng: &mut R, input: usize, output: usize, head: Head) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let weight = DMatrix::from_fn(output, input, |_, _| rng.gen_range(-bound..bound));
        let bias = DMatrix::from_fn(1, output, |_, _| rng.gen_range(-bound..bound));
        Self::new(weight, bias, head)
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn affine(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        check_width(x, self.input_dim())?;
        let mut out = x * self.weight.transpose();
        add_row(&mut out, &self.bias);
        Ok(out)
    }

    fn apply_head(&self, pre: DMatrix<f64>) -> DMatrix<f64> {
        match self.head {
            Head::Identity => pre,
            Head::Softmax => softmax_rows(&pre),
        }
    }

    pub(super) fn forward(&mut self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let out = self.apply_head(self.affine(x)?);
        self.cache = Some((x.clone(), out.clone()));
        Ok(out)
    }

    pub(super) fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        Ok(self.apply_head(self.affine(x)?))
    }

    pub(super) fn backward(&self, dout: &DMatrix<f64>) -> Result<Gradients, ModelError> {
        let (x, out) = self.cache.as_ref().ok_or(ModelError::NoCachedForward)?;
        let dpre = match self.head {
            Head::Identity => dout.clone(),
            Head::Softmax => softmax_backward(out, dout),
        };
        Ok(vec![dpre.tr_mul(x), column_sums(&dpre)])
    }

    pub(super) fn params(&self) -> Vec<&DMatrix<f64>> {
        vec![&self.weight, &self.bias]
    }

    pub(super) fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
