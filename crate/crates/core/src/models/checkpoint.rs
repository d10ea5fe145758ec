//! Plain-text tensor container.
//!
//! ```text
//! taskbased-checkpoint 1
//! model mlp <input> <output> <width> <residual 0|1> <head identity|softmax>
//! tensor <name> <rows> <cols>
//! <row-major values, one row per line>
//! ...
//! ```
//! Linear models write `model linear <input> <output> 0 0 <head>`. Values are
//! printed with full round-trip precision.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::{Head, LinearModel, MlpModel, ModelError, PredictiveModel};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "taskbased-checkpoint";

fn head_name(h: Head) -> &'static str {
    match h {
        Head::Identity => "identity",
        Head::Softmax => "softmax",
    }
}

fn io_err(e: std::io::Error) -> ModelError {
    ModelError::Checkpoint(e.to_string())
}

fn named_tensors(model: &PredictiveModel) -> Vec<(String, &DMatrix<f64>)> {
    let mut out: Vec<(String, &DMatrix<f64>)> = model
        .param_names()
        .into_iter()
        .map(String::from)
        .zip(model.params())
        .collect();
    if let PredictiveModel::Mlp(m) = model {
        let names = ["hidden1.running_mean", "hidden1.running_var", "hidden2.running_mean", "hidden2.running_var"];
        out.extend(names.into_iter().map(String::from).zip(m.buffers()));
    }
    out
}

pub fn save_checkpoint<W: Write>(model: &PredictiveModel, mut w: W) -> Result<(), ModelError> {
    writeln!(w, "{MAGIC} {CHECKPOINT_VERSION}").map_err(io_err)?;
    let (kind, width, residual) = match model {
        PredictiveModel::Linear(_) => ("linear", 0, false),
        PredictiveModel::Mlp(m) => ("mlp", m.hidden_width(), m.has_residual()),
    };
    writeln!(
        w,
        "model {kind} {} {} {width} {} {}",
        model.input_dim(),
        model.output_dim(),
        u8::from(residual),
        head_name(model.head())
    )
    .map_err(io_err)?;
    for (name, t) in named_tensors(model) {
        writeln!(w, "tensor {name} {} {}", t.nrows(), t.ncols()).map_err(io_err)?;
        for row in t.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" ")).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<R: BufRead>(r: R) -> Result<PredictiveModel, ModelError> {
    let bad = |msg: &str| ModelError::Checkpoint(msg.to_string());
    let mut lines = r.lines();
    let mut next = || -> Result<String, ModelError> {
        lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(io_err)
    };
    let header = next()?;
    match header.split_whitespace().collect::<Vec<_>>()[..] {
        [MAGIC, v] if v == CHECKPOINT_VERSION.to_string() => {}
        [MAGIC, v] => return Err(bad(&format!("unsupported version {v}"))),
        _ => return Err(bad("missing header")),
    }
    let spec = next()?;
    let fields: Vec<&str> = spec.split_whitespace().collect();
    if fields.len() != 7 || fields[0] != "model" {
        return Err(bad("malformed model line"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
    let (input, output, width) = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
    let residual = fields[5] == "1";
    let head = match fields[6] {
        "identity" => Head::Identity,
        "softmax" => Head::Softmax,
        _ => return Err(bad("unknown head")),
    };
    let mut model = match fields[1] {
        "linear" => PredictiveModel::Linear(LinearModel::zeros(input, output, head)),
        "mlp" => PredictiveModel::Mlp(MlpModel::shell(input, output, width, head, residual)),
        _ => return Err(bad("unknown model kind")),
    };
    let expected: Vec<(String, usize, usize)> = named_tensors(&model)
        .into_iter()
        .map(|(n, t)| (n, t.nrows(), t.ncols()))
        .collect();
    let mut loaded = Vec::with_capacity(expected.len());
    for (name, rows, cols) in &expected {
        let line = next()?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "tensor" || f[1] != name || num(f[2])? != *rows || num(f[3])? != *cols {
            return Err(bad(&format!("expected tensor {name} {rows}x{cols}, found `{line}`")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..*rows {
            for v in next()?.split_whitespace() {
                data.push(v.parse::<f64>().map_err(|_| bad("bad number"))?);
            }
        }
        if data.len() != rows * cols {
            return Err(bad(&format!("tensor {name} has {} values", data.len())));
        }
        loaded.push(DMatrix::from_row_slice(*rows, *cols, &data));
    }
    let n_params = model.params().len();
    for (dst, src) in model.params_mut().into_iter().zip(&loaded) {
        *dst = src.clone();
    }
    if let PredictiveModel::Mlp(m) = &mut model {
        for (dst, src) in m.buffers_mut().into_iter().zip(&loaded[n_params..]) {
            *dst = src.clone();
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Mode;
    use crate::random::{normal_matrix, rng};

    #[test]
    fn mlp_round_trip_preserves_predictions() {
        let mut r = rng(7);
        let lin = LinearModel::random(&mut r, 3, 2, Head::Identity);
        let mut model = PredictiveModel::Mlp(MlpModel::with_width(&mut r, 3, 2, 5, Head::Softmax).with_residual(lin));
        let x = normal_matrix(&mut r, 4, 3);
        model.forward(&x, Mode::Train { key: 1 }).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&model, &mut buf).unwrap();
        let back = load_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.predict(&x).unwrap(), model.predict(&x).unwrap());
        assert_eq!(back.flat_params(), model.flat_params());
    }

    #[test]
    fn rejects_other_versions() {
        let text = "taskbased-checkpoint 99\n";
        assert!(matches!(load_checkpoint(text.as_bytes()), Err(ModelError::Checkpoint(_))));
    }

    #[test]
    fn rejects_truncated_tensor() {
        let model = PredictiveModel::Linear(LinearModel::zeros(2, 2, Head::Identity));
        let mut buf = Vec::new();
        save_checkpoint(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(load_checkpoint(cut.as_bytes()).is_err());
    }
}
