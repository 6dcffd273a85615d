//! Layer kernels. Inside the network, activations are kept channel-major as
//! `(channels, batch * len)` so that convolution is one matrix product over
//! an im2col buffer and batch norm works on whole rows.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Unfolds `x` (channels × batch·len) into (channels·k × batch·len) with
/// zero padding `pad` on both ends of every sample.
pub(crate) fn im2col(x: ArrayView2<f64>, batch: usize, len: usize, k: usize, pad: usize) -> Array2<f64> {
    let cin = x.nrows();
    let mut cols = Array2::zeros((cin * k, batch * len));
    for c in 0..cin {
        let row = x.row(c);
        for kk in 0..k {
            let mut out = cols.row_mut(c * k + kk);
            for b in 0..batch {
                let base = b * len;
                // output t reads input t + kk - pad
                let lo = pad.saturating_sub(kk);
                let hi = (len + pad).saturating_sub(kk).min(len);
                for t in lo..hi {
                    out[base + t] = row[base + t + kk - pad];
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im(cols: ArrayView2<f64>, cin: usize, batch: usize, len: usize, k: usize, pad: usize) -> Array2<f64> {
    let mut x = Array2::zeros((cin, batch * len));
    for c in 0..cin {
        let mut row = x.row_mut(c);
        for kk in 0..k {
            let src = cols.row(c * k + kk);
            for b in 0..batch {
                let base = b * len;
                let lo = pad.saturating_sub(kk);
                let hi = (len + pad).saturating_sub(kk).min(len);
                for t in lo..hi {
                    row[base + t + kk - pad] += src[base + t];
                }
            }
        }
    }
    x
}

pub(crate) fn add_row_bias(z: &mut Array2<f64>, bias: &Array1<f64>) {
    for (mut row, &b) in z.rows_mut().into_iter().zip(bias) {
        row += b;
    }
}

/// `out[b, o, t] = bias[o] + sum_{c,k} w[o, c, k] * in_padded[b, c, t + k]`.
pub fn conv1d_forward(input: &Array3<f64>, weights: &Array3<f64>, bias: &Array1<f64>, pad: usize) -> Result<Array3<f64>> {
    let (batch, cin, len) = input.dim();
    let (cout, wcin, k) = weights.dim();
    if wcin != cin || bias.len() != cout {
        return Err(Error::Dimension(format!(
            "conv weights {:?} and bias {} for input channels {cin}",
            weights.dim(),
            bias.len()
        )));
    }
    if len + 2 * pad < k {
        return Err(Error::Dimension(format!("input length {len} shorter than kernel {k}")));
    }
    let out_len = len + 2 * pad - k + 1;
    if out_len != len {
        return Err(Error::Unsupported(format!("kernel {k} with padding {pad} is not length-preserving")));
    }
    let x = to_channel_major(input);
    let cols = im2col(x.view(), batch, len, k, pad);
    let w = weights.to_shape((cout, cin * k)).map_err(|e| Error::Dimension(e.to_string()))?;
    let mut z = w.dot(&cols);
    add_row_bias(&mut z, bias);
    Ok(from_channel_major(&z, batch, len))
}

/// Gradients of [`conv1d_forward`]: (d input, d weights, d bias).
pub fn conv1d_backward(
    input: &Array3<f64>,
    weights: &Array3<f64>,
    pad: usize,
    dout: &Array3<f64>,
) -> Result<(Array3<f64>, Array3<f64>, Array1<f64>)> {
    let (batch, cin, len) = input.dim();
    let (cout, wcin, k) = weights.dim();
    if wcin != cin || dout.dim() != (batch, cout, len) || 2 * pad + 1 != k {
        return Err(Error::Dimension(format!(
            "conv backward: input {:?}, weights {:?}, output gradient {:?}",
            input.dim(),
            weights.dim(),
            dout.dim()
        )));
    }
    let cols = im2col(to_channel_major(input).view(), batch, len, k, pad);
    let dz = to_channel_major(dout);
    let w = weights.to_shape((cout, cin * k)).map_err(|e| Error::Dimension(e.to_string()))?;
    let dw = dz.dot(&cols.t()).into_shape_with_order((cout, cin, k)).map_err(|e| Error::Dimension(e.to_string()))?;
    let dx = col2im(w.t().dot(&dz).view(), cin, batch, len, k, pad);
    Ok((from_channel_major(&dx, batch, len), dw, dz.sum_axis(Axis(1))))
}

pub(crate) fn to_channel_major(x: &Array3<f64>) -> Array2<f64> {
    let (batch, c, len) = x.dim();
    let mut out = Array2::zeros((c, batch * len));
    for b in 0..batch {
        out.slice_mut(s![.., b * len..(b + 1) * len]).assign(&x.index_axis(Axis(0), b));
    }
    out
}

pub(crate) fn from_channel_major(x: &Array2<f64>, batch: usize, len: usize) -> Array3<f64> {
    let c = x.nrows();
    Array3::from_shape_fn((batch, c, len), |(b, ch, t)| x[[ch, b * len + t]])
}

/// Channel-major activations to one flat row per sample, ordered `c * len + t`.
pub(crate) fn flatten(x: &Array2<f64>, batch: usize, len: usize) -> Array2<f64> {
    let c = x.nrows();
    let mut out = Array2::zeros((batch, c * len));
    for b in 0..batch {
        let mut row = out.row_mut(b);
        for ch in 0..c {
            row.slice_mut(s![ch * len..(ch + 1) * len]).assign(&x.slice(s![ch, b * len..(b + 1) * len]));
        }
    }
    out
}

pub(crate) fn unflatten(x: &Array2<f64>, channels: usize, len: usize) -> Array2<f64> {
    let batch = x.nrows();
    let mut out = Array2::zeros((channels, batch * len));
    for b in 0..batch {
        for ch in 0..channels {
            out.slice_mut(s![ch, b * len..(b + 1) * len]).assign(&x.slice(s![b, ch * len..(ch + 1) * len]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub mean: Array1<f64>,
    /// Population variance of the batch.
    pub var: Array1<f64>,
}

/// Training-mode batch norm over rows of a channel-major activation.
pub(crate) fn bn_train(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, BnCache) {
    let n = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / n;
    let mut xhat = x.clone();
    let mut var = Array1::zeros(x.nrows());
    let mut inv_std = Array1::zeros(x.nrows());
    for (c, mut row) in xhat.rows_mut().into_iter().enumerate() {
        row -= mean[c];
        var[c] = row.iter().map(|v| v * v).sum::<f64>() / n;
        inv_std[c] = 1.0 / (var[c] + BN_EPS).sqrt();
        row *= inv_std[c];
    }
    let mut y = xhat.clone();
    for (c, mut row) in y.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| gamma[c] * v + beta[c]);
    }
    (y, BnCache { xhat, inv_std, mean, var })
}

pub(crate) fn bn_eval(
    x: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    running_mean: &Array1<f64>,
    running_var: &Array1<f64>,
) -> Array2<f64> {
    let mut y = x.clone();
    for (c, mut row) in y.rows_mut().into_iter().enumerate() {
        let scale = gamma[c] / (running_var[c] + BN_EPS).sqrt();
        let shift = beta[c] - running_mean[c] * scale;
        row.mapv_inplace(|v| v * scale + shift);
    }
    y
}

/// Returns (dx, dgamma, dbeta).
pub(crate) fn bn_backward(dy: &Array2<f64>, cache: &BnCache, gamma: &Array1<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let n = dy.ncols() as f64;
    let dbeta = dy.sum_axis(Axis(1));
    let dgamma = (dy * &cache.xhat).sum_axis(Axis(1));
    let mut dx = Array2::zeros(dy.raw_dim());
    for c in 0..dy.nrows() {
        let g = gamma[c];
        let sum_dxhat = g * dbeta[c];
        let sum_dxhat_xhat = g * dgamma[c];
        let k = cache.inv_std[c] / n;
        let (dyr, xh) = (dy.row(c), cache.xhat.row(c));
        for ((out, &d), &xv) in dx.row_mut(c).iter_mut().zip(dyr).zip(xh) {
            *out = k * (n * g * d - sum_dxhat - xv * sum_dxhat_xhat);
        }
    }
    (dx, dgamma, dbeta)
}

/// Batch norm on a `batch × channels × len` tensor. Train mode uses batch
/// statistics (population variance over batch and length); eval mode uses
/// the supplied running statistics.
pub fn batchnorm1d_forward(
    input: &Array3<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    running: Option<(&Array1<f64>, &Array1<f64>)>,
    mode: Mode,
) -> Result<Array3<f64>> {
    let (batch, c, len) = input.dim();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Dimension(format!("batch norm over {c} channels got {} parameters", gamma.len())));
    }
    let x = to_channel_major(input);
    let y = match mode {
        Mode::Train => bn_train(&x, gamma, beta).0,
        Mode::Eval => {
            let (m, v) = running.ok_or(Error::StatsUninitialized)?;
            bn_eval(&x, gamma, beta, m, v)
        }
    };
    Ok(from_channel_major(&y, batch, len))
}

/// Train-mode gradients of [`batchnorm1d_forward`]: (d input, d gamma, d beta).
pub fn batchnorm1d_backward(
    input: &Array3<f64>,
    gamma: &Array1<f64>,
    dout: &Array3<f64>,
) -> Result<(Array3<f64>, Array1<f64>, Array1<f64>)> {
    let (batch, c, len) = input.dim();
    if gamma.len() != c || dout.dim() != input.dim() {
        return Err(Error::Dimension(format!("batch norm backward over {c} channels got {:?}", dout.dim())));
    }
    let (_, cache) = bn_train(&to_channel_major(input), gamma, &Array1::zeros(c));
    let (dx, dgamma, dbeta) = bn_backward(&to_channel_major(dout), &cache, gamma);
    Ok((from_channel_major(&dx, batch, len), dgamma, dbeta))
}

/// `input · W + b`.
pub fn affine_forward(input: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Result<Array2<f64>> {
    if input.ncols() != w.nrows() || w.ncols() != b.len() {
        return Err(Error::Dimension(format!(
            "affine {:?} · {:?} + {}",
            input.dim(),
            w.dim(),
            b.len()
        )));
    }
    Ok(input.dot(w) + b)
}

/// Gradients of [`affine_forward`]: (d input, d W, d b).
pub fn affine_backward(input: &Array2<f64>, w: &Array2<f64>, dout: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array1<f64>)> {
    if input.ncols() != w.nrows() || dout.dim() != (input.nrows(), w.ncols()) {
        return Err(Error::Dimension(format!("affine backward {:?} · {:?} with {:?}", input.dim(), w.dim(), dout.dim())));
    }
    Ok((dout.dot(&w.t()), input.t().dot(dout), dout.sum_axis(Axis(0))))
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient of [`relu`] with respect to its input (0 at the kink).
pub fn relu_backward_input(input: &Array2<f64>, dout: &Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(dout).and(input).map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 })
}

pub(crate) fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub(crate) fn relu_backward(grad: &mut Array2<f64>, output: &Array2<f64>) {
    ndarray::Zip::from(grad).and(output).for_each(|g, &o| {
        if o <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Mean cross-entropy of `logits` against class `labels`, and its gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch || batch == 0 {
        return Err(Error::Dimension(format!("{} labels for {batch} logits", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidInput(format!("label {l} out of range for {classes} classes")));
    }
    let mut loss = 0.0;
    let mut grad = softmax(logits);
    for (i, (row, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        grad[[i, label]] -= 1.0;
    }
    grad /= batch as f64;
    Ok((loss / batch as f64, grad))
}

/// Mean squared error of a `batch × 1` prediction and its gradient.
pub fn mse_loss(pred: &Array2<f64>, targets: &[f64]) -> Result<(f64, Array2<f64>)> {
    let batch = pred.nrows();
    if pred.ncols() != 1 || targets.len() != batch || batch == 0 {
        return Err(Error::Dimension(format!("{:?} predictions for {} targets", pred.dim(), targets.len())));
    }
    let diff = Array2::from_shape_fn((batch, 1), |(i, _)| pred[[i, 0]] - targets[i]);
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / batch as f64;
    Ok((loss, diff * (2.0 / batch as f64)))
}

/// One SGD update: `v <- momentum * v + g; p <- p - lr * v`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}
