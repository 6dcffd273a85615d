//! A 1D convolutional network trained from scratch with plain SGD.
//!
//! Layout: `blocks` × (conv k, length-preserving zero padding → batch norm →
//! ReLU), flatten, then fully connected layers with ReLU between them and a
//! linear task output (2 logits or 1 value).

mod checkpoint;
mod layers;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, label, rng};
use crate::task::{Predictions, TaskKind};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use layers::{
    affine_backward, affine_forward, batchnorm1d_backward, batchnorm1d_forward, conv1d_backward, conv1d_forward,
    mse_loss, relu, relu_backward_input, sgd_step, softmax, softmax_cross_entropy, Mode, BN_EPS, BN_MOMENTUM,
};

use layers::{
    add_row_bias, bn_backward, bn_eval, bn_train, col2im, flatten, im2col, relu_backward, relu_inplace, unflatten,
    BnCache,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArch {
    pub input_len: usize,
    pub channels: usize,
    pub kernel: usize,
    pub blocks: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
}

impl CnnArch {
    /// Three 64-channel k=5 blocks and a 512/128 head.
    pub fn standard(input_len: usize, task: TaskKind) -> Self {
        CnnArch {
            input_len,
            channels: 64,
            kernel: 5,
            blocks: 3,
            hidden: vec![512, 128],
            outputs: outputs_for(task),
        }
    }

    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.channels == 0 || self.blocks == 0 || self.outputs == 0 {
            return Err(Error::InvalidInput(format!("degenerate architecture {self:?}")));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Unsupported(format!("even kernel {} cannot preserve length", self.kernel)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidInput("hidden layer of width 0".into()));
        }
        Ok(())
    }

    fn dense_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.channels * self.input_len];
        widths.extend(&self.hidden);
        widths.push(self.outputs);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

fn outputs_for(task: TaskKind) -> usize {
    match task {
        TaskKind::Classification => 2,
        TaskKind::Regression => 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    /// `(out, in · k)`, row `o` laid out as `c * k + tap`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(in, out)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn1dModel {
    pub arch: CnnArch,
    pub task: TaskKind,
    pub blocks: Vec<ConvBlock>,
    pub dense: Vec<Dense>,
    /// Running batch-norm statistics have been set (by training or explicitly).
    pub stats_ready: bool,
    /// Regression targets were standardized as `(y - mean) / sd` for training.
    pub target_scale: Option<(f64, f64)>,
}

/// Gradients in [`Cnn1dModel::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

/// Weight initialization. `FanInUniform` draws weights and biases from
/// U(±1/sqrt(fan_in)); `HeUniform` draws weights from U(±sqrt(6/fan_in)) with
/// zero biases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    #[default]
    FanInUniform,
    HeUniform,
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fan-in-uniform" => Ok(InitScheme::FanInUniform),
            "he-uniform" => Ok(InitScheme::HeUniform),
            other => Err(Error::Config(format!("unknown init scheme `{other}`"))),
        }
    }
}

impl InitScheme {
    pub fn name(self) -> &'static str {
        match self {
            InitScheme::FanInUniform => "fan-in-uniform",
            InitScheme::HeUniform => "he-uniform",
        }
    }

    fn draw(self, r: &mut impl Rng, shape: (usize, usize), fan_in: usize) -> (Array2<f64>, Array1<f64>) {
        let uniform = |r: &mut dyn rand::RngCore, bound: f64, n: usize| -> Vec<f64> {
            (0..n).map(|_| r.random_range(-bound..=bound)).collect()
        };
        let n = shape.0 * shape.1;
        match self {
            InitScheme::FanInUniform => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w = Array2::from_shape_vec(shape, uniform(r, bound, n)).expect("shape");
                (w, Array1::from(uniform(r, bound, shape.1)))
            }
            InitScheme::HeUniform => {
                let bound = (6.0 / fan_in as f64).sqrt();
                (Array2::from_shape_vec(shape, uniform(r, bound, n)).expect("shape"), Array1::zeros(shape.1))
            }
        }
    }
}

impl Cnn1dModel {
    /// Randomly initialized model with unit BN scale and zero BN shift.
    pub fn init(arch: &CnnArch, task: TaskKind, scheme: InitScheme, seed: u64) -> Result<Self> {
        arch.validate()?;
        if arch.outputs != outputs_for(task) {
            return Err(Error::InvalidInput(format!("{task:?} needs {} outputs", outputs_for(task))));
        }
        let mut r = rng(seed);
        let c = arch.channels;
        let blocks = (0..arch.blocks)
            .map(|i| {
                let cin = if i == 0 { 1 } else { c };
                let fan_in = cin * arch.kernel;
                // stored as (out, in·k); draw as (in·k, out) to share the dense path
                let (w, bias) = scheme.draw(&mut r, (fan_in, c), fan_in);
                ConvBlock {
                    weight: w.reversed_axes().as_standard_layout().into_owned(),
                    bias,
                    gamma: Array1::ones(c),
                    beta: Array1::zeros(c),
                    running_mean: Array1::zeros(c),
                    running_var: Array1::ones(c),
                }
            })
            .collect();
        let dense = arch
            .dense_shapes()
            .into_iter()
            .map(|(n, m)| {
                let (weight, bias) = scheme.draw(&mut r, (n, m), n);
                Dense { weight, bias }
            })
            .collect();
        Ok(Cnn1dModel { arch: arch.clone(), task, blocks, dense, stats_ready: false, target_scale: None })
    }

    /// Marks the current running statistics (0 mean, unit variance at init)
    /// as usable for eval mode.
    pub fn init_running_stats(&mut self) {
        self.stats_ready = true;
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.blocks.len() {
            for p in ["weight", "bias", "gamma", "beta"] {
                names.push(format!("block{i}.{p}"));
            }
        }
        for i in 0..self.dense.len() {
            names.push(format!("dense{i}.weight"));
            names.push(format!("dense{i}.bias"));
        }
        names
    }

    /// Trainable tensors: per block (weight, bias, gamma, beta), then per
    /// dense layer (weight, bias).
    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.blocks {
            for t in [&b.weight.as_slice(), &b.bias.as_slice(), &b.gamma.as_slice(), &b.beta.as_slice()] {
                out.push(t.expect("standard layout"));
            }
        }
        for d in &self.dense {
            out.push(d.weight.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            out.push(b.weight.as_slice_mut().expect("standard layout"));
            out.push(b.bias.as_slice_mut().expect("standard layout"));
            out.push(b.gamma.as_slice_mut().expect("standard layout"));
            out.push(b.beta.as_slice_mut().expect("standard layout"));
        }
        for d in &mut self.dense {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.arch.input_len {
            return Err(Error::Dimension(format!(
                "model expects length {}, got {}",
                self.arch.input_len,
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite network input".into()));
        }
        Ok(())
    }

    /// Raw network outputs (logits or standardized values) for a
    /// `batch × input_len` input.
    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>> {
        self.check_input(x)?;
        if mode == Mode::Eval && !self.stats_ready {
            return Err(Error::StatsUninitialized);
        }
        Ok(self.forward_cached(x, mode).output)
    }

    fn forward_cached(&self, x: ArrayView2<f64>, mode: Mode) -> Cache {
        let (batch, len) = x.dim();
        let (k, pad) = (self.arch.kernel, self.arch.pad());
        let mut a = x.to_shape((1, batch * len)).expect("contiguous input").to_owned();
        let mut conv = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let cols = im2col(a.view(), batch, len, k, pad);
            let mut z = block.weight.dot(&cols);
            add_row_bias(&mut z, &block.bias);
            let (mut y, bn) = match mode {
                Mode::Train => {
                    let (y, cache) = bn_train(&z, &block.gamma, &block.beta);
                    (y, Some(cache))
                }
                Mode::Eval => (
                    bn_eval(&z, &block.gamma, &block.beta, &block.running_mean, &block.running_var),
                    None,
                ),
            };
            relu_inplace(&mut y);
            conv.push(ConvCache { cols, bn, out: y.clone() });
            a = y;
        }
        let mut h = flatten(&a, batch, len);
        let mut dense_in = Vec::with_capacity(self.dense.len());
        let last = self.dense.len() - 1;
        for (i, d) in self.dense.iter().enumerate() {
            let mut z = h.dot(&d.weight) + &d.bias;
            if i < last {
                relu_inplace(&mut z);
            }
            dense_in.push(h);
            h = z;
        }
        Cache { batch, len, conv, dense_in, output: h }
    }

    /// Reverse-mode gradients of the loss given `dout = dL/d(output)` from a
    /// train-mode forward pass, written into `grads` (shaped like the
    /// parameters) so large buffers are reused across steps.
    fn backward_into(&self, cache: &Cache, dout: &Array2<f64>, grads: &mut Gradients) {
        let nb = self.blocks.len();
        let g = &mut grads.0;
        let mut dz = dout.clone();
        for i in (0..self.dense.len()).rev() {
            let d = &self.dense[i];
            let input = &cache.dense_in[i];
            let mut dw = ArrayViewMut2::from_shape(d.weight.dim(), &mut g[4 * nb + 2 * i]).expect("gradient shape");
            general_mat_mul(1.0, &input.t(), &dz, 0.0, &mut dw);
            g[4 * nb + 2 * i + 1].copy_from_slice(dz.sum_axis(Axis(0)).as_slice().expect("contiguous"));
            let mut dh = dz.dot(&d.weight.t());
            if i > 0 {
                relu_backward(&mut dh, input);
            }
            dz = dh;
        }
        // dz is now the gradient w.r.t. the flattened last block output
        let (batch, len) = (cache.batch, cache.len);
        let mut da = unflatten(&dz, self.arch.channels, len);
        for i in (0..nb).rev() {
            let block = &self.blocks[i];
            let cc = &cache.conv[i];
            relu_backward(&mut da, &cc.out);
            let bn = cc.bn.as_ref().expect("backward needs a train-mode forward");
            let (dconv, dgamma, dbeta) = bn_backward(&da, bn, &block.gamma);
            let mut dw = ArrayViewMut2::from_shape(block.weight.dim(), &mut g[4 * i]).expect("gradient shape");
            general_mat_mul(1.0, &dconv, &cc.cols.t(), 0.0, &mut dw);
            g[4 * i + 1].copy_from_slice(dconv.sum_axis(Axis(1)).as_slice().expect("contiguous"));
            g[4 * i + 2].copy_from_slice(dgamma.as_slice().expect("contiguous"));
            g[4 * i + 3].copy_from_slice(dbeta.as_slice().expect("contiguous"));
            if i > 0 {
                let dcols = block.weight.t().dot(&dconv);
                da = col2im(dcols.view(), self.arch.channels, batch, len, self.arch.kernel, self.arch.pad());
            }
        }
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients(self.parameters().iter().map(|p| vec![0.0; p.len()]).collect())
    }

    fn update_running_stats(&mut self, cache: &Cache) {
        for (block, cc) in self.blocks.iter_mut().zip(&cache.conv) {
            let bn = cc.bn.as_ref().expect("train-mode cache");
            let n = (cache.batch * cache.len) as f64;
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            block.running_mean = &block.running_mean * (1.0 - BN_MOMENTUM) + &bn.mean * BN_MOMENTUM;
            block.running_var = &block.running_var * (1.0 - BN_MOMENTUM) + &bn.var * (BN_MOMENTUM * unbias);
        }
        self.stats_ready = true;
    }
}

struct ConvCache {
    cols: Array2<f64>,
    bn: Option<BnCache>,
    out: Array2<f64>,
}

struct Cache {
    batch: usize,
    len: usize,
    conv: Vec<ConvCache>,
    dense_in: Vec<Array2<f64>>,
    output: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    MeanSquaredError,
}

impl LossKind {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Classification => LossKind::CrossEntropy,
            TaskKind::Regression => LossKind::MeanSquaredError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub standardize_targets: bool,
    #[serde(default)]
    pub init: InitScheme,
}

impl TrainConfig {
    pub fn for_task(task: TaskKind, seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 8,
            epochs: 300,
            momentum: 0.0,
            seed,
            loss: LossKind::for_task(task),
            standardize_targets: true,
            init: InitScheme::default(),
        }
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite())
            || self.batch_size == 0
            || self.epochs == 0
            || !(0.0..1.0).contains(&self.momentum)
        {
            return Err(Error::InvalidInput(format!("bad training configuration {self:?}")));
        }
        if self.loss != LossKind::for_task(task) {
            return Err(Error::Unsupported(format!("{:?} loss for a {task:?} task", self.loss)));
        }
        Ok(())
    }
}

/// Loss for a batch plus its gradient with respect to the network output.
pub fn batch_loss(output: &Array2<f64>, targets: &[f64], loss: LossKind) -> Result<(f64, Array2<f64>)> {
    match loss {
        LossKind::CrossEntropy => {
            let labels: Vec<usize> = targets.iter().map(|&t| t as usize).collect();
            softmax_cross_entropy(output, &labels)
        }
        LossKind::MeanSquaredError => mse_loss(output, targets),
    }
}

impl Cnn1dModel {
    /// Loss and gradients of one train-mode step without touching any state.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, targets: &[f64], loss: LossKind) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let cache = self.forward_cached(x, Mode::Train);
        let (value, dout) = batch_loss(&cache.output, targets, loss)?;
        let mut grads = self.zero_gradients();
        self.backward_into(&cache, &dout, &mut grads);
        Ok((value, grads))
    }

    /// Train-mode loss only (for finite differences).
    pub fn train_loss(&self, x: ArrayView2<f64>, targets: &[f64], loss: LossKind) -> Result<f64> {
        self.check_input(x)?;
        Ok(batch_loss(&self.forward_cached(x, Mode::Train).output, targets, loss)?.0)
    }

    /// ReLU on/off pattern of a train-mode pass, used to detect kinks.
    pub fn activation_pattern(&self, x: ArrayView2<f64>) -> Result<Vec<bool>> {
        self.check_input(x)?;
        let cache = self.forward_cached(x, Mode::Train);
        let mut pattern: Vec<bool> = cache.conv.iter().flat_map(|c| c.out.iter().map(|&v| v > 0.0)).collect();
        for h in &cache.dense_in[1..] {
            pattern.extend(h.iter().map(|&v| v > 0.0));
        }
        Ok(pattern)
    }
}

#[derive(Debug, Clone)]
pub struct CnnFit {
    pub model: Cnn1dModel,
    /// Mean per-sample training loss of every epoch.
    pub loss_trace: Vec<f64>,
}

fn validate_targets(y: &[f64], task: TaskKind) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training target".into()));
    }
    if task == TaskKind::Classification && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("classification targets must be 0 or 1".into()));
    }
    Ok(())
}

/// Trains a network on rows of `x` (already max-min scaled) against `y`
/// (0/1 labels or real targets). Returns the model ready for eval mode.
pub fn train_cnn(x: ArrayView2<f64>, y: &[f64], task: TaskKind, arch: &CnnArch, cfg: &TrainConfig) -> Result<CnnFit> {
    cfg.validate(task)?;
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} inputs for {} targets", x.nrows(), y.len())));
    }
    validate_targets(y, task)?;
    let mut model = Cnn1dModel::init(arch, task, cfg.init, derive_seed(cfg.seed, &[label("init")]))?;
    model.check_input(x)?;

    let targets: Vec<f64> = if task == TaskKind::Regression && cfg.standardize_targets {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        model.target_scale = Some((mean, sd));
        y.iter().map(|v| (v - mean) / sd).collect()
    } else {
        y.to_vec()
    };

    let mut velocity = if cfg.momentum == 0.0 {
        vec![Vec::new(); model.parameters().len()]
    } else {
        model.zero_gradients().0
    };
    let mut grads = model.zero_gradients();
    let mut shuffler = rng(derive_seed(cfg.seed, &[label("shuffle")]));
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffler);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let cache = model.forward_cached(xb.view(), Mode::Train);
            let (loss, dout) = batch_loss(&cache.output, &yb, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            model.backward_into(&cache, &dout, &mut grads);
            for ((p, g), v) in model.parameters_mut().into_iter().zip(&grads.0).zip(&mut velocity) {
                if cfg.momentum == 0.0 {
                    // v would just equal g
                    p.iter_mut().zip(g).for_each(|(p, g)| *p -= cfg.learning_rate * g);
                } else {
                    sgd_step(p, g, v, cfg.learning_rate, cfg.momentum);
                }
            }
            model.update_running_stats(&cache);
            total += loss * chunk.len() as f64;
        }
        let mean = total / y.len() as f64;
        if !mean.is_finite() || model.parameters().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        trace.push(mean);
    }
    Ok(CnnFit { model, loss_trace: trace })
}

/// Eval-mode predictions: softmax probabilities for classification, values
/// on the original target scale for regression.
pub fn cnn_predict(model: &Cnn1dModel, x: ArrayView2<f64>) -> Result<Predictions> {
    let out = model.forward(x, Mode::Eval)?;
    Ok(match model.task {
        TaskKind::Classification => {
            let p = softmax(&out);
            Predictions::Probabilities(p.rows().into_iter().map(|r| [r[0], r[1]]).collect())
        }
        TaskKind::Regression => {
            let (mean, sd) = model.target_scale.unwrap_or((0.0, 1.0));
            Predictions::Values(out.column(0).iter().map(|v| mean + sd * v).collect())
        }
    })
}
