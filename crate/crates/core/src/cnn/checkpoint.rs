//! Checkpoint layout:
//!
//! ```text
//! tractshape-cnn 1\n
//! <one line of JSON: architecture, task, flags, tensor names and shapes>\n
//! <every tensor in header order as little-endian f64, row-major>
//! ```

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{CnnArch, Cnn1dModel, ConvBlock, Dense, InitScheme};
use crate::error::{Error, Result};
use crate::task::TaskKind;

pub const CHECKPOINT_MAGIC: &str = "tractshape-cnn 1";

#[derive(Serialize, Deserialize)]
struct Header {
    arch: CnnArch,
    task: TaskKind,
    stats_ready: bool,
    target_scale: Option<(f64, f64)>,
    tensors: Vec<(String, Vec<usize>)>,
}

fn tensors(model: &Cnn1dModel) -> Vec<(String, Vec<usize>, &[f64])> {
    let mut out = Vec::new();
    for (i, b) in model.blocks.iter().enumerate() {
        let shape = vec![b.weight.nrows(), b.weight.ncols() / model.arch.kernel, model.arch.kernel];
        out.push((format!("block{i}.weight"), shape, b.weight.as_slice().expect("standard layout")));
        for (name, t) in [
            ("bias", &b.bias),
            ("gamma", &b.gamma),
            ("beta", &b.beta),
            ("running_mean", &b.running_mean),
            ("running_var", &b.running_var),
        ] {
            out.push((format!("block{i}.{name}"), vec![t.len()], t.as_slice().expect("standard layout")));
        }
    }
    for (i, d) in model.dense.iter().enumerate() {
        out.push((format!("dense{i}.weight"), vec![d.weight.nrows(), d.weight.ncols()], d.weight.as_slice().unwrap()));
        out.push((format!("dense{i}.bias"), vec![d.bias.len()], d.bias.as_slice().unwrap()));
    }
    out
}

pub fn save_checkpoint(model: &Cnn1dModel) -> Result<Vec<u8>> {
    let list = tensors(model);
    let header = Header {
        arch: model.arch.clone(),
        task: model.task,
        stats_ready: model.stats_ready,
        target_scale: model.target_scale,
        tensors: list.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect(),
    };
    let mut out = format!("{CHECKPOINT_MAGIC}\n{}\n", serde_json::to_string(&header)?).into_bytes();
    for (_, _, data) in list {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("checkpoint header is not terminated".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| Error::MalformedHeader("checkpoint header is not UTF-8".into()))
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Cnn1dModel> {
    let mut pos = 0;
    if next_line(bytes, &mut pos)? != CHECKPOINT_MAGIC {
        return Err(Error::MalformedHeader("not a network checkpoint".into()));
    }
    let header: Header = serde_json::from_str(next_line(bytes, &mut pos)?)?;
    // Build a template with the expected shapes, then fill it.
    let mut model = Cnn1dModel::init(&header.arch, header.task, InitScheme::default(), 0)?;
    let expected: Vec<(String, Vec<usize>)> =
        tensors(&model).into_iter().map(|(n, s, _)| (n, s)).collect();
    if expected != header.tensors {
        return Err(Error::Format("checkpoint tensor list does not match its architecture".into()));
    }
    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let payload = &bytes[pos..];
    if payload.len() != total * 8 {
        return Err(Error::Truncated(format!("checkpoint has {} payload bytes, expected {}", payload.len(), total * 8)));
    }
    let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let kernel = header.arch.kernel;
    for b in &mut model.blocks {
        let (rows, cols) = b.weight.dim();
        *b = ConvBlock {
            weight: Array2::from_shape_vec((rows, cols), take(rows * cols)).expect("shape checked"),
            bias: Array1::from(take(rows)),
            gamma: Array1::from(take(rows)),
            beta: Array1::from(take(rows)),
            running_mean: Array1::from(take(rows)),
            running_var: Array1::from(take(rows)),
        };
        debug_assert_eq!(cols % kernel, 0);
    }
    for d in &mut model.dense {
        let (rows, cols) = d.weight.dim();
        *d = Dense {
            weight: Array2::from_shape_vec((rows, cols), take(rows * cols)).expect("shape checked"),
            bias: Array1::from(take(cols)),
        };
    }
    let finite = tensors(&model).iter().all(|(_, _, t)| t.iter().all(|v| v.is_finite()));
    if !finite || model.blocks.iter().any(|b| b.running_var.iter().any(|&v| v < 0.0)) {
        return Err(Error::CorruptData("checkpoint holds non-finite parameters".into()));
    }
    model.stats_ready = header.stats_ready;
    model.target_scale = header.target_scale;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{train_cnn, TrainConfig};

    #[test]
    fn round_trip_is_exact() {
        let task = TaskKind::Regression;
        let arch = CnnArch { input_len: 8, channels: 3, kernel: 3, blocks: 2, hidden: vec![5], outputs: 1 };
        let x = Array2::from_shape_fn((6, 8), |(i, j)| ((i * 8 + j) as f64 * 0.37).sin());
        let y: Vec<f64> = (0..6).map(|i| 10.0 + i as f64).collect();
        let cfg = TrainConfig { epochs: 3, ..TrainConfig::for_task(task, 2) };
        let model = train_cnn(x.view(), &y, task, &arch, &cfg).unwrap().model;
        let bytes = save_checkpoint(&model).unwrap();
        assert!(bytes.starts_with(b"tractshape-cnn 1\n"));
        assert_eq!(load_checkpoint(&bytes).unwrap(), model);
    }

    #[test]
    fn damaged_checkpoints_are_rejected() {
        let arch = CnnArch { input_len: 4, channels: 1, kernel: 3, blocks: 1, hidden: vec![], outputs: 2 };
        let model = Cnn1dModel::init(&arch, TaskKind::Classification, InitScheme::default(), 1).unwrap();
        let bytes = save_checkpoint(&model).unwrap();
        assert!(matches!(load_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
        assert!(matches!(load_checkpoint(b"something else\n{}\n"), Err(Error::MalformedHeader(_))));
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(load_checkpoint(&nan), Err(Error::CorruptData(_))));
    }
}
