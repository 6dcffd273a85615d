//! Elastic-net linear regression fitted by cyclic coordinate descent.
//!
//! Minimizes, over standardized columns `Z` and centered targets,
//!
//! ```text
//! (1/(2n)) ||y - b - Z w||^2 + alpha * (rho * ||w||_1 + (1 - rho)/2 * ||w||^2)
//! ```
//!
//! where `rho` is the l1 ratio. Columns are z-scored with population
//! statistics so that `(1/n) sum z_ij^2 = 1`, which makes each coordinate
//! update a closed-form soft-threshold.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::MeasureKind;
use crate::seed::round_robin_folds;

/// Candidate penalties tried by [`enet_tune_alpha`].
pub const ALPHA_GRID: [f64; 7] = [1.0, 0.5, 0.1, 0.05, 0.01, 0.005, 0.001];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnetOptions {
    pub alpha: f64,
    pub l1_ratio: f64,
    /// Convergence threshold on the largest standardized weight change in a sweep.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective after every sweep (costs one extra pass per sweep).
    #[serde(skip)]
    pub track_objective: bool,
}

impl Default for EnetOptions {
    fn default() -> Self {
        EnetOptions { alpha: 0.005, l1_ratio: 0.5, tol: 1e-4, max_iter: 1000, track_objective: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    pub measures: Vec<MeasureKind>,
    /// Coefficients on the original (unstandardized) column scale.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

#[derive(Debug, Clone)]
pub struct EnetFit {
    pub model: ElasticNetModel,
    /// Objective value after each sweep, when tracking was requested.
    pub objective_trace: Vec<f64>,
}

/// `sign(z) * max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

struct Standardized {
    columns: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    active: Vec<bool>,
}

fn standardize(x: ArrayView2<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let mut columns = Vec::with_capacity(x.ncols());
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    let mut active = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= 1e-12 * (1.0 + mean.abs()) {
            columns.push(Vec::new());
            scales.push(1.0);
            active.push(false);
        } else {
            columns.push(col.iter().map(|v| (v - mean) / sd).collect());
            scales.push(sd);
            active.push(true);
        }
        means.push(mean);
    }
    Standardized { columns, means, scales, active }
}

fn objective(residual: &[f64], w: &[f64], alpha: f64, l1_ratio: f64) -> f64 {
    let n = residual.len() as f64;
    let rss: f64 = residual.iter().map(|r| r * r).sum();
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    rss / (2.0 * n) + alpha * (l1_ratio * l1 + 0.5 * (1.0 - l1_ratio) * l2)
}

fn validate(x: ArrayView2<f64>, y: &[f64], opts: &EnetOptions) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!("{} rows for {} targets", x.nrows(), y.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidInput("elastic net needs at least two samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in elastic-net data".into()));
    }
    if !(opts.alpha >= 0.0) || !(0.0..=1.0).contains(&opts.l1_ratio) || !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad elastic-net options: alpha {}, l1_ratio {}, tol {}",
            opts.alpha, opts.l1_ratio, opts.tol
        )));
    }
    Ok(())
}

/// Fits an elastic net. Hitting `max_iter` is not an error: the model comes
/// back with `converged = false`.
pub fn enet_fit(x: ArrayView2<f64>, y: &[f64], opts: &EnetOptions) -> Result<EnetFit> {
    validate(x, y, opts)?;
    let n = y.len();
    let p = x.ncols();
    let std = standardize(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut w = vec![0.0; p];

    let threshold = opts.alpha * opts.l1_ratio;
    let shrink = 1.0 + opts.alpha * (1.0 - opts.l1_ratio);
    let inv_n = 1.0 / n as f64;
    let mut trace = Vec::new();
    if opts.track_objective {
        trace.push(objective(&residual, &w, opts.alpha, opts.l1_ratio));
    }
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_iter {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for j in 0..p {
            if !std.active[j] {
                continue;
            }
            let col = &std.columns[j];
            let rho: f64 = col.iter().zip(&residual).map(|(a, b)| a * b).sum::<f64>() * inv_n;
            let updated = soft_threshold(rho + w[j], threshold) / shrink;
            let delta = updated - w[j];
            if delta != 0.0 {
                for (r, z) in residual.iter_mut().zip(col) {
                    *r -= delta * z;
                }
                w[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if opts.track_objective {
            trace.push(objective(&residual, &w, opts.alpha, opts.l1_ratio));
        }
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }

    let weights: Vec<f64> = w.iter().zip(&std.scales).map(|(w, s)| w / s).collect();
    let intercept = y_mean - weights.iter().zip(&std.means).map(|(w, m)| w * m).sum::<f64>();
    Ok(EnetFit {
        model: ElasticNetModel {
            measures: Vec::new(),
            weights,
            intercept,
            alpha: opts.alpha,
            l1_ratio: opts.l1_ratio,
            column_means: std.means,
            column_scales: std.scales,
            converged,
            sweeps,
        },
        objective_trace: trace,
    })
}

/// `intercept + X w`.
pub fn enet_predict(model: &ElasticNetModel, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.weights.len() {
        return Err(Error::Dimension(format!(
            "model has {} weights, input has {} columns",
            model.weights.len(),
            x.ncols()
        )));
    }
    Ok(x
        .rows()
        .into_iter()
        .map(|row| model.intercept + row.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// (alpha, mean inner-fold MSE) for every candidate, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the grid value with the lowest mean inner-CV MSE; ties go to the
/// larger alpha.
pub fn enet_tune_alpha(
    x: ArrayView2<f64>,
    y: &[f64],
    grid: &[f64],
    inner_folds: usize,
    seed: u64,
    base: &EnetOptions,
) -> Result<AlphaSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty alpha grid".into()));
    }
    if inner_folds < 2 || y.len() < 2 * inner_folds {
        return Err(Error::InvalidInput(format!(
            "{} samples are too few for {inner_folds} inner folds",
            y.len()
        )));
    }
    validate(x, y, base)?;
    let folds = round_robin_folds(y.len(), inner_folds, seed);
    let split = |k: usize, held_out: bool| -> Vec<usize> {
        (0..y.len()).filter(|&i| (folds[i] == k) == held_out).collect()
    };

    let mut scores = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let opts = EnetOptions { alpha, track_objective: false, ..*base };
        let mut total = 0.0;
        for k in 0..inner_folds {
            let (train, test) = (split(k, false), split(k, true));
            let xt = x.select(ndarray::Axis(0), &train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = enet_fit(xt.view(), &yt, &opts)?.model;
            let xv = x.select(ndarray::Axis(0), &test);
            let pred = enet_predict(&model, xv.view())?;
            let mse = test.iter().zip(&pred).map(|(&i, p)| (y[i] - p).powi(2)).sum::<f64>()
                / test.len() as f64;
            total += mse;
        }
        scores.push((alpha, total / inner_folds as f64));
    }

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut best = order[0];
    for &i in &order[1..] {
        let (current, candidate) = (scores[best].1, scores[i].1);
        if candidate < current - 1e-12 * current.abs() {
            best = i;
        }
    }
    Ok(AlphaSelection { alpha: grid[best], scores })
}
