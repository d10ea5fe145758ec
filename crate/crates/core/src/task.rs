//! Interface shared by the three benchmark problems.
//!
//! A task turns one row of model output into a decision by solving a proxy
//! stochastic program, scores decisions against realized targets, and maps
//! gradients with respect to the decision back to the model output.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::diff::DiffError;
use crate::models::FitTargets;
use crate::qp::{solve_qp, QpError, QpSolution, QuadraticProgram, SolveStatus, SolverOptions};

/// Slack below which a deterministic constraint counts as satisfied.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("invalid problem data: {0}")]
    Qp(#[from] QpError),
    #[error("proxy solve ended with status {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("sequential QP did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Samples as rows. `y` holds realized targets in the units the task scores
/// (inventory: demand value; generation: hourly load; storage: hourly price).
/// `labels` holds demand-level indices for discrete tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }

    /// Splits off the last `fraction` of rows (chronological hold-out).
    pub fn split_tail(&self, fraction: f64) -> (Self, Self) {
        let n = self.len();
        let tail = ((n as f64) * fraction).round() as usize;
        let head: Vec<usize> = (0..n - tail).collect();
        let rest: Vec<usize> = (n - tail..n).collect();
        (self.subset(&head), self.subset(&rest))
    }
}

/// Deterministic constraints on the decision vector, `G d <= h`, `A d = b`.
/// Column means and standard deviations of the training features, applied
/// unchanged to held-out rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / n);
        let scale = DVector::from_fn(x.ncols(), |j, _| {
            let sd = (x.column(j).map(|v| (v - mean[j]).powi(2)).sum() / n).sqrt();
            // constant columns pass through centred
            if sd > 1e-12 { sd } else { 1.0 }
        });
        Self { mean, scale }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let x = DMatrix::from_fn(data.x.nrows(), data.x.ncols(), |i, j| (data.x[(i, j)] - self.mean[j]) / self.scale[j]);
        Dataset { x, ..data.clone() }
    }
}

/// Writes features then targets, one sample per row, with a header.
pub fn write_dataset_csv<W: Write>(data: &Dataset, feature_names: &[String], target_prefix: &str, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = feature_names.to_vec();
    header.extend((0..data.y.ncols()).map(|j| format!("{target_prefix}{j}")));
    out.write_record(&header)?;
    for i in 0..data.len() {
        let rec: Vec<String> = data.x.row(i).iter().chain(data.y.row(i).iter()).map(|v| format!("{v:e}")).collect();
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_dataset_csv`]; the last `num_targets`
/// columns are targets. Returns the dataset and the feature names.
pub fn read_dataset_csv<R: Read>(r: R, num_targets: usize) -> Result<(Dataset, Vec<String>), TaskError> {
    let bad = |e: String| TaskError::InvalidInput(e);
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    if header.len() < num_targets {
        return Err(bad(format!("{} columns cannot hold {num_targets} targets", header.len())));
    }
    let nx = header.len() - num_targets;
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for field in rec.iter() {
            values.push(field.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", rows + 1)))?);
        }
        rows += 1;
    }
    let all = DMatrix::from_row_slice(rows, header.len(), &values);
    let data = Dataset {
        x: all.columns(0, nx).into_owned(),
        y: all.columns(nx, num_targets).into_owned(),
        labels: None,
    };
    Ok((data, header[..nx].to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl FeasibleSet {
    /// Rows violated by more than [`VIOLATION_TOL`], as
    /// `(amount, gradient of the amount)`; equalities count in both directions.
    pub fn violations(&self, d: &DVector<f64>) -> Vec<(f64, DVector<f64>)> {
        let mut out = Vec::new();
        let gd = &self.g * d - &self.h;
        for i in 0..gd.len() {
            if gd[i] > VIOLATION_TOL {
                out.push((gd[i], self.g.row(i).transpose()));
            }
        }
        let ad = &self.a * d - &self.b;
        for i in 0..ad.len() {
            if ad[i].abs() > VIOLATION_TOL {
                out.push((ad[i].abs(), self.a.row(i).transpose() * ad[i].signum()));
            }
        }
        out
    }

    pub fn is_feasible(&self, d: &DVector<f64>) -> bool {
        self.violations(d).is_empty()
    }

    /// Euclidean projection QP `min 1/2 |d - u|^2` over the set.
    pub fn projection_qp(&self, u: &DVector<f64>) -> Result<QuadraticProgram, QpError> {
        let n = u.len();
        QuadraticProgram::new(
            DMatrix::identity(n, n),
            -u,
            self.g.clone(),
            self.h.clone(),
            self.a.clone(),
            self.b.clone(),
        )
    }
}

/// Solution of one proxy problem. For sequential solves `qp` is the final
/// quadratic model.
#[derive(Debug, Clone)]
pub struct Proxy {
    pub decision: DVector<f64>,
    pub qp: QuadraticProgram,
    pub sol: QpSolution,
}

pub(crate) fn solve_checked(qp: &QuadraticProgram, opts: &SolverOptions) -> Result<QpSolution, TaskError> {
    let sol = solve_qp(qp, opts);
    if !sol.is_optimal() {
        return Err(TaskError::Solver(sol.status));
    }
    Ok(sol)
}

pub trait Task: Sync {
    fn name(&self) -> &'static str;

    /// Width of one model output row.
    fn output_dim(&self) -> usize;

    fn decision_dim(&self) -> usize;

    /// Decision induced by one model output row.
    fn solve_proxy(&self, out: &DVector<f64>) -> Result<Proxy, TaskError>;

    /// Maps `dL/d decision` at `proxy` to `dL/d out`.
    fn backward(&self, out: &DVector<f64>, proxy: &Proxy, dl_dd: &DVector<f64>) -> Result<DVector<f64>, TaskError>;

    fn realized_cost(&self, d: &DVector<f64>, y: &DVector<f64>) -> f64;

    /// Gradient of [`Task::realized_cost`] in the decision.
    fn realized_cost_grad(&self, d: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;

    fn feasible_set(&self) -> FeasibleSet;

    /// Likelihood targets used by maximum-likelihood and least-squares fits.
    fn likelihood_targets(&self, data: &Dataset) -> FitTargets;

    /// Point forecast in target units, used for RMSE.
    fn point_prediction(&self, out: &DVector<f64>) -> DVector<f64>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset {
            x: DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]),
            y: DMatrix::from_row_slice(3, 1, &[0.5, -1.25, 1e-3]),
            labels: None,
        }
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let d = sample();
        let s = Standardizer::fit(&d.x);
        let z = s.apply(&d);
        assert!(z.x.column(0).sum().abs() < 1e-12);
        assert!((z.x.column(0).norm_squared() / 3.0 - 1.0).abs() < 1e-12);
        // constant column
        assert_eq!(z.x.column(1).amax(), 0.0);
        assert_eq!(z.y, d.y);
    }

    #[test]
    fn csv_round_trip() {
        let d = sample();
        let names = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        write_dataset_csv(&d, &names, "y", &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("a,b,y0\n"));
        let (back, back_names) = read_dataset_csv(buf.as_slice(), 1).unwrap();
        assert_eq!(back, d);
        assert_eq!(back_names, names);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(read_dataset_csv("a,y0\n1,zz\n".as_bytes(), 1).is_err());
        assert!(read_dataset_csv("a\n1\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn split_tail_is_chronological() {
        let (head, tail) = sample().split_tail(1.0 / 3.0);
        assert_eq!(head.len(), 2);
        assert_eq!(tail.x[(0, 0)], 3.0);
    }
}
