//! Cross-validated experiments: one model per measure and fold, fusion within
//! each category, then fusion across categories.

mod config;
mod extract;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnn::{cnn_predict, train_cnn, CnnArch, InitScheme, LossKind, TrainConfig};
use crate::error::{Error, Result};
use crate::io::{feature_file_name, read_feature_table, write_feature_csv, PhenotypeRecord, Target};
use crate::linear::{enet_fit, enet_predict, enet_tune_alpha, EnetOptions, ALPHA_GRID};
use crate::measures::{FeatureMatrix, MeasureKind};
use crate::normalize::minmax_values;
use crate::seed::{derive_seed, label, round_robin_folds};
use crate::stats;
use crate::task::{Metric, Predictions, TaskKind, TaskSpec};

pub use config::{CategorySpec, ExperimentConfig};
pub use extract::{extract_cohort, subject_dirs, write_feature_tables};
pub use report::{
    compare_experiments, compare_methods, render_comparison, render_report, ComparisonTable, EvalReport, FoldSummary,
    MetricSummary, PairwiseComparison,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Enet,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Enet => "enet",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "enet" | "e-net" | "elasticnet" => Ok(ModelKind::Enet),
            other => Err(Error::Config(format!("unknown model `{other}` (expected cnn or enet)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSettings {
    pub channels: usize,
    pub kernel: usize,
    pub blocks: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub standardize_targets: bool,
    pub init: InitScheme,
}

impl Default for CnnSettings {
    fn default() -> Self {
        let arch = CnnArch::standard(1, TaskKind::Regression);
        let train = TrainConfig::for_task(TaskKind::Regression, 0);
        CnnSettings {
            channels: arch.channels,
            kernel: arch.kernel,
            blocks: arch.blocks,
            hidden: arch.hidden,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            epochs: train.epochs,
            momentum: train.momentum,
            standardize_targets: train.standardize_targets,
            init: train.init,
        }
    }
}

impl CnnSettings {
    pub fn arch(&self, input_len: usize, task: TaskKind) -> CnnArch {
        CnnArch {
            input_len,
            channels: self.channels,
            kernel: self.kernel,
            blocks: self.blocks,
            hidden: self.hidden.clone(),
            outputs: CnnArch::standard(input_len, task).outputs,
        }
    }

    pub fn train_config(&self, task: TaskKind, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            momentum: self.momentum,
            seed,
            loss: LossKind::for_task(task),
            standardize_targets: self.standardize_targets,
            init: self.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnetSettings {
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub alpha_grid: Vec<f64>,
    pub inner_folds: usize,
}

impl Default for EnetSettings {
    fn default() -> Self {
        let base = EnetOptions::default();
        EnetSettings {
            l1_ratio: base.l1_ratio,
            tol: base.tol,
            max_iter: base.max_iter,
            alpha_grid: ALPHA_GRID.to_vec(),
            inner_folds: 5,
        }
    }
}

/// Model kind plus the settings of both model families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub kind: ModelKind,
    /// Per-subject max-min scaling of every input vector.
    pub minmax: bool,
    pub cnn: CnnSettings,
    pub enet: EnetSettings,
}

impl ModelOptions {
    pub fn new(kind: ModelKind) -> Self {
        ModelOptions { kind, minmax: true, cnn: CnnSettings::default(), enet: EnetSettings::default() }
    }

    pub fn validate(&self, task: TaskSpec) -> Result<()> {
        if self.kind == ModelKind::Enet && task.kind == TaskKind::Classification {
            return Err(Error::Unsupported(format!("E-Net cannot classify {}", task.target)));
        }
        match self.kind {
            ModelKind::Cnn => {
                self.cnn.arch(1, task.kind).validate()?;
                self.cnn.train_config(task.kind, 0).validate(task.kind)
            }
            ModelKind::Enet => {
                let e = &self.enet;
                if e.alpha_grid.is_empty() || e.alpha_grid.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return Err(Error::Config(format!("bad alpha grid {:?}", e.alpha_grid)));
                }
                if !(0.0..=1.0).contains(&e.l1_ratio) || !(e.tol > 0.0) || e.max_iter == 0 || e.inner_folds < 2 {
                    return Err(Error::Config(format!("bad E-Net settings {e:?}")));
                }
                Ok(())
            }
        }
    }
}

/// Each subject's fold in `0..k`, in `subject_ids` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub subject_ids: Vec<String>,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subject_ids.is_empty()
    }

    pub fn fold_of(&self, subject_id: &str) -> Option<usize> {
        self.subject_ids.iter().position(|s| s == subject_id).map(|i| self.folds[i])
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k).map(|f| self.folds.iter().filter(|&&x| x == f).count()).collect()
    }

    /// SHA-256 over k, seed and every `(subject, fold)` pair.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{} {}\n", self.k, self.seed));
        for (id, f) in self.subject_ids.iter().zip(&self.folds) {
            h.update(format!("{id},{f}\n"));
        }
        hex::encode(h.finalize())
    }
}

/// Seeded shuffle then round-robin over `k` folds.
pub fn make_folds(subject_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    if subject_ids.len() < k {
        return Err(Error::InvalidInput(format!("{} subjects are too few for {k} folds", subject_ids.len())));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = subject_ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::DuplicateId(dup.clone()));
    }
    Ok(FoldAssignment {
        k,
        seed,
        subject_ids: subject_ids.to_vec(),
        folds: round_robin_folds(subject_ids.len(), k, seed),
    })
}

/// Subjects that have `target`, sorted by id, with their target values.
pub fn task_subjects(phenotypes: &BTreeMap<String, PhenotypeRecord>, target: Target) -> (Vec<String>, Vec<f64>) {
    phenotypes.iter().filter_map(|(id, rec)| rec.get(target).map(|v| (id.clone(), v))).unzip()
}

/// Folds over the subjects that have the task's target.
pub fn make_task_folds(
    phenotypes: &BTreeMap<String, PhenotypeRecord>,
    target: Target,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    make_folds(&task_subjects(phenotypes, target).0, k, seed)
}

/// What one fold's model saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFit {
    pub fold: usize,
    /// Sorted ids of the subjects the model was fitted on.
    pub training_subjects: Vec<String>,
    /// Penalty picked by inner cross-validation (E-Net).
    pub alpha: Option<f64>,
    /// Mean loss of the last epoch (CNN).
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub label: String,
    pub measures: Vec<MeasureKind>,
    pub model: ModelKind,
    pub fold_digest: String,
    /// Fold whose model produced each prediction.
    pub predicted_by: Vec<usize>,
    /// Per-fold training records; empty for fused sets.
    pub fits: Vec<FoldFit>,
    /// The sets a fused set was built from.
    pub sources: Vec<Provenance>,
}

/// Out-of-fold predictions for every subject of a fold assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub task: TaskSpec,
    pub subject_ids: Vec<String>,
    pub predictions: Predictions,
    pub provenance: Provenance,
}

impl PredictionSet {
    /// Task metric on each fold's held-out subjects.
    pub fn fold_metrics(&self, truth: &[f64], folds: &FoldAssignment) -> Result<Vec<f64>> {
        if folds.subject_ids != self.subject_ids || truth.len() != self.subject_ids.len() {
            return Err(Error::FoldMismatch(format!(
                "{} does not cover the fold assignment's subjects",
                self.provenance.label
            )));
        }
        (0..folds.k)
            .map(|f| {
                let idx = folds.test_indices(f);
                let t: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
                fold_metric(self.task.metric, &self.predictions.select(&idx), &t)
            })
            .collect()
    }
}

/// Acc in percent, MAE, or Pearson r. A fold whose predictions or truths
/// are constant has no linear association and scores r = 0.
pub fn fold_metric(metric: Metric, predictions: &Predictions, truth: &[f64]) -> Result<f64> {
    match (metric, predictions) {
        (Metric::Acc, Predictions::Probabilities(_)) => {
            let labels = predictions.labels().expect("probabilities have labels");
            let truth: Vec<u8> = truth.iter().map(|&t| u8::from(t >= 0.5)).collect();
            stats::accuracy(&labels, &truth)
        }
        (Metric::Mae, Predictions::Values(v)) => stats::mae(v, truth),
        (Metric::PearsonR, Predictions::Values(v)) => match stats::pearson_r(v, truth) {
            Err(Error::UndefinedCorrelation(_)) => Ok(0.0),
            other => other,
        },
        _ => Err(Error::Unsupported(format!("{metric} on {:?} predictions", predictions.kind()))),
    }
}

fn minmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let scaled = minmax_values(&row.to_vec());
        row.assign(&ndarray::ArrayView1::from(&scaled));
    }
}

fn describe_ids(ids: &[&str]) -> String {
    const SHOWN: usize = 10;
    let mut s = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(" and {} more", ids.len() - SHOWN));
    }
    s
}

/// Rows of `features` in the fold assignment's subject order.
fn aligned_rows(features: &FeatureMatrix, folds: &FoldAssignment) -> Result<Array2<f64>> {
    let index: BTreeMap<&str, usize> =
        features.subject_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let missing: Vec<&str> =
        folds.subject_ids.iter().map(String::as_str).filter(|id| !index.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(Error::SubjectMismatch(format!(
            "no {} features for {}",
            features.measure,
            describe_ids(&missing)
        )));
    }
    let rows: Vec<usize> = folds.subject_ids.iter().map(|id| index[id.as_str()]).collect();
    Ok(features.values.select(Axis(0), &rows))
}

struct FoldOutput {
    test: Vec<usize>,
    predictions: Predictions,
    fit: FoldFit,
}

fn fit_fold(
    x: ArrayView2<f64>,
    targets: &[f64],
    task: TaskSpec,
    options: &ModelOptions,
    folds: &FoldAssignment,
    fold: usize,
    seed: u64,
) -> Result<FoldOutput> {
    let (train, test) = (folds.train_indices(fold), folds.test_indices(fold));
    let xt = x.select(Axis(0), &train);
    let yt: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let xv = x.select(Axis(0), &test);
    let mut training_subjects: Vec<String> = train.iter().map(|&i| folds.subject_ids[i].clone()).collect();
    training_subjects.sort();
    let mut fit = FoldFit { fold, training_subjects, alpha: None, final_loss: None };
    let predictions = match options.kind {
        ModelKind::Enet => {
            let e = &options.enet;
            let base = EnetOptions {
                alpha: e.alpha_grid[0],
                l1_ratio: e.l1_ratio,
                tol: e.tol,
                max_iter: e.max_iter,
                track_objective: false,
            };
            let alpha = if e.alpha_grid.len() == 1 {
                e.alpha_grid[0]
            } else {
                let inner_seed = derive_seed(seed, &[label("alpha")]);
                enet_tune_alpha(xt.view(), &yt, &e.alpha_grid, e.inner_folds, inner_seed, &base)?.alpha
            };
            let model = enet_fit(xt.view(), &yt, &EnetOptions { alpha, ..base })?.model;
            fit.alpha = Some(alpha);
            Predictions::Values(enet_predict(&model, xv.view())?)
        }
        ModelKind::Cnn => {
            let arch = options.cnn.arch(x.ncols(), task.kind);
            let cfg = options.cnn.train_config(task.kind, seed);
            let trained = train_cnn(xt.view(), &yt, task.kind, &arch, &cfg)?;
            fit.final_loss = trained.loss_trace.last().copied();
            cnn_predict(&trained.model, xv.view())?
        }
    };
    Ok(FoldOutput { test, predictions, fit })
}

/// Trains one model per fold on the other folds and predicts the held-out
/// fold. `targets` follows `folds.subject_ids`; `features` may hold extra
/// subjects, which are ignored.
pub fn train_measure_model(
    features: &FeatureMatrix,
    targets: &[f64],
    task: TaskSpec,
    options: &ModelOptions,
    folds: &FoldAssignment,
    seed: u64,
) -> Result<PredictionSet> {
    task.validate()?;
    options.validate(task)?;
    if targets.len() != folds.len() {
        return Err(Error::Dimension(format!("{} targets for {} subjects", targets.len(), folds.len())));
    }
    let mut x = aligned_rows(features, folds)?;
    if options.minmax {
        minmax_rows(&mut x);
    }
    let measure = features.measure;
    let outputs: Vec<FoldOutput> = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let job_seed = derive_seed(seed, &[label(measure.name()), fold as u64]);
            let out = fit_fold(x.view(), targets, task, options, folds, fold, job_seed);
            if out.is_ok() {
                log::info!("{measure} fold {}/{} done", fold + 1, folds.k);
            }
            out
        })
        .collect::<Result<_>>()?;

    let n = folds.len();
    let mut predicted_by = vec![usize::MAX; n];
    let predictions = match task.kind {
        TaskKind::Classification => {
            let mut p = vec![[0.0; 2]; n];
            for out in &outputs {
                let Predictions::Probabilities(q) = &out.predictions else { unreachable!("classifier output") };
                for (&i, &v) in out.test.iter().zip(q) {
                    p[i] = v;
                    predicted_by[i] = out.fit.fold;
                }
            }
            Predictions::Probabilities(p)
        }
        TaskKind::Regression => {
            let mut p = vec![0.0; n];
            for out in &outputs {
                let Predictions::Values(q) = &out.predictions else { unreachable!("regressor output") };
                for (&i, &v) in out.test.iter().zip(q) {
                    p[i] = v;
                    predicted_by[i] = out.fit.fold;
                }
            }
            Predictions::Values(p)
        }
    };
    Ok(PredictionSet {
        task,
        subject_ids: folds.subject_ids.clone(),
        predictions,
        provenance: Provenance {
            label: measure.name().to_string(),
            measures: vec![measure],
            model: options.kind,
            fold_digest: folds.digest(),
            predicted_by,
            fits: outputs.into_iter().map(|o| o.fit).collect(),
            sources: Vec::new(),
        },
    })
}

/// Mean of predictions (regression) or of class probabilities (soft vote).
/// A single set is returned unchanged.
pub fn fuse_predictions(sets: &[PredictionSet], label: &str) -> Result<PredictionSet> {
    let first = sets.first().ok_or_else(|| Error::InvalidInput("nothing to fuse".into()))?;
    if sets.len() == 1 {
        return Ok(first.clone());
    }
    for s in &sets[1..] {
        if s.task != first.task {
            return Err(Error::InvalidInput(format!(
                "cannot fuse {} and {} predictions",
                first.task.target, s.task.target
            )));
        }
        if s.provenance.fold_digest != first.provenance.fold_digest
            || s.subject_ids != first.subject_ids
            || s.provenance.predicted_by != first.provenance.predicted_by
        {
            return Err(Error::FoldMismatch(format!(
                "{} and {} use different folds",
                first.provenance.label, s.provenance.label
            )));
        }
        if s.provenance.model != first.provenance.model {
            return Err(Error::Unsupported(format!(
                "fusing {} with {} outputs",
                first.provenance.model, s.provenance.model
            )));
        }
        if s.predictions.len() != first.predictions.len() || s.predictions.kind() != first.predictions.kind() {
            return Err(Error::Dimension(format!("{} has malformed predictions", s.provenance.label)));
        }
    }
    let m = sets.len() as f64;
    let n = first.predictions.len();
    let predictions = match &first.predictions {
        Predictions::Values(_) => Predictions::Values(
            (0..n)
                .map(|i| {
                    sets.iter()
                        .map(|s| match &s.predictions {
                            Predictions::Values(v) => v[i],
                            Predictions::Probabilities(_) => unreachable!("kinds checked"),
                        })
                        .sum::<f64>()
                        / m
                })
                .collect(),
        ),
        Predictions::Probabilities(_) => Predictions::Probabilities(
            (0..n)
                .map(|i| {
                    let mut acc = [0.0; 2];
                    for s in sets {
                        let Predictions::Probabilities(p) = &s.predictions else { unreachable!("kinds checked") };
                        acc[0] += p[i][0];
                        acc[1] += p[i][1];
                    }
                    [acc[0] / m, acc[1] / m]
                })
                .collect(),
        ),
    };
    let mut measures = Vec::new();
    for s in sets {
        for &k in &s.provenance.measures {
            if !measures.contains(&k) {
                measures.push(k);
            }
        }
    }
    Ok(PredictionSet {
        task: first.task,
        subject_ids: first.subject_ids.clone(),
        predictions,
        provenance: Provenance {
            label: label.to_string(),
            measures,
            model: first.provenance.model,
            fold_digest: first.provenance.fold_digest.clone(),
            predicted_by: first.provenance.predicted_by.clone(),
            fits: Vec::new(),
            sources: sets.iter().map(|s| s.provenance.clone()).collect(),
        },
    })
}

fn audit(p: &Provenance, subject_ids: &[String]) -> Result<()> {
    if p.predicted_by.len() != subject_ids.len() {
        return Err(Error::Leakage(format!("{}: not every subject is predicted once", p.label)));
    }
    if !p.sources.is_empty() {
        for s in &p.sources {
            if s.predicted_by != p.predicted_by {
                return Err(Error::Leakage(format!("{}: source {} disagrees on folds", p.label, s.label)));
            }
            audit(s, subject_ids)?;
        }
        return Ok(());
    }
    for (id, &fold) in subject_ids.iter().zip(&p.predicted_by) {
        let fit = p
            .fits
            .iter()
            .find(|f| f.fold == fold)
            .ok_or_else(|| Error::Leakage(format!("{}: {id} predicted by unknown fold {fold}", p.label)))?;
        if fit.training_subjects.binary_search(id).is_ok() {
            return Err(Error::Leakage(format!("{}: {id} was in its own model's training set", p.label)));
        }
    }
    Ok(())
}

/// Checks that every prediction, including those inside fused sets, came
/// from a model whose training subjects exclude the predicted subject.
pub fn audit_no_leakage(set: &PredictionSet) -> Result<()> {
    audit(&set.provenance, &set.subject_ids)
}

/// Feature matrices by measure plus the phenotype table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    pub features: BTreeMap<MeasureKind, FeatureMatrix>,
    pub phenotypes: BTreeMap<String, PhenotypeRecord>,
}

impl Cohort {
    /// Reads every `<measure>.csv` present in `features_dir`.
    pub fn load(features_dir: &Path, phenotypes_csv: &Path) -> Result<Cohort> {
        let mut features = BTreeMap::new();
        for kind in MeasureKind::ALL {
            let path = features_dir.join(feature_file_name(kind));
            if path.exists() {
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                features.insert(kind, read_feature_table(&bytes, kind)?);
            }
        }
        if features.is_empty() {
            return Err(Error::InvalidInput(format!("no feature tables in {}", features_dir.display())));
        }
        let bytes = std::fs::read(phenotypes_csv).map_err(|e| Error::io(phenotypes_csv, e))?;
        Ok(Cohort { features, phenotypes: crate::io::load_phenotypes(&bytes)? })
    }

    /// SHA-256 over the canonical CSV text of every feature table.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (kind, m) in &self.features {
            h.update(format!("{kind}\n"));
            h.update(write_feature_csv(m));
        }
        hex::encode(h.finalize())
    }

    /// Subjects with `target` and their values, after checking that the
    /// feature tables of `measures` and the phenotype table list the same
    /// subjects.
    pub fn task_data(&self, target: Target, measures: &[MeasureKind]) -> Result<(Vec<String>, Vec<f64>)> {
        let (ids, values) = task_subjects(&self.phenotypes, target);
        for &kind in measures {
            let m = self
                .features
                .get(&kind)
                .ok_or_else(|| Error::InvalidInput(format!("no {kind} feature table")))?;
            let have: BTreeSet<&str> = m.subject_ids.iter().map(String::as_str).collect();
            let no_features: Vec<&str> = ids.iter().map(String::as_str).filter(|id| !have.contains(id)).collect();
            if !no_features.is_empty() {
                return Err(Error::SubjectMismatch(format!("no {kind} features for {}", describe_ids(&no_features))));
            }
            let no_phenotypes: Vec<&str> = m
                .subject_ids
                .iter()
                .map(String::as_str)
                .filter(|id| !self.phenotypes.contains_key(*id))
                .collect();
            if !no_phenotypes.is_empty() {
                return Err(Error::SubjectMismatch(format!(
                    "no phenotype row for {kind} subjects {}",
                    describe_ids(&no_phenotypes)
                )));
            }
        }
        Ok((ids, values))
    }
}

/// Everything one experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: EvalReport,
    pub folds: FoldAssignment,
    pub targets: Vec<f64>,
    pub measures: Vec<PredictionSet>,
    pub categories: Vec<PredictionSet>,
    pub fused: PredictionSet,
}

pub fn run_experiment(cohort: &Cohort, config: &ExperimentConfig) -> Result<EvalReport> {
    run_experiment_detailed(cohort, config).map(|r| r.report)
}

/// Per-measure models, fusion within each category, then fusion of the
/// category outputs (each category weighs the same regardless of size).
pub fn run_experiment_detailed(cohort: &Cohort, config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let measures = config.measures();
    let (ids, targets) = cohort.task_data(config.task.target, &measures)?;
    let folds = make_folds(&ids, config.folds, config.seed)?;
    log::info!(
        "experiment `{}`: {} subjects, {} folds, {} measures, seed {}",
        config.name,
        folds.len(),
        folds.k,
        measures.len(),
        config.seed
    );
    let sets: Vec<PredictionSet> = measures
        .par_iter()
        .map(|kind| {
            train_measure_model(&cohort.features[kind], &targets, config.task, &config.model, &folds, config.seed)
        })
        .collect::<Result<_>>()?;
    let by_measure: BTreeMap<MeasureKind, &PredictionSet> = measures.iter().copied().zip(&sets).collect();
    let categories: Vec<PredictionSet> = config
        .categories
        .iter()
        .map(|c| {
            let members: Vec<PredictionSet> = c.measures.iter().map(|k| by_measure[k].clone()).collect();
            let mut fused = fuse_predictions(&members, &c.name)?;
            fused.provenance.label = c.name.clone();
            Ok(fused)
        })
        .collect::<Result<_>>()?;
    let fused_label = config.categories.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(" + ");
    let mut fused = fuse_predictions(&categories, &fused_label)?;
    fused.provenance.label = fused_label;
    audit_no_leakage(&fused)?;
    let report = report::assemble(config, cohort.content_hash(), &folds, &targets, &sets, &categories, &fused)?;
    Ok(ExperimentRun { report, folds, targets, measures: sets, categories, fused })
}
