//! Evaluation reports, between-method statistics, and their text tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, FoldAssignment, ModelKind, PredictionSet};
use crate::error::{Error, Result};
use crate::measures::MeasureKind;
use crate::stats::{self, TestResult};
use crate::task::{Metric, TaskSpec};

/// Per-fold metric values with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub label: String,
    pub measures: Vec<MeasureKind>,
    pub fold_values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    pub fn new(label: &str, measures: &[MeasureKind], fold_values: Vec<f64>) -> Self {
        MetricSummary {
            label: label.to_string(),
            measures: measures.to_vec(),
            mean: stats::mean(&fold_values),
            std: stats::sample_sd(&fold_values),
            fold_values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub k: usize,
    pub seed: u64,
    pub subjects: usize,
    pub sizes: Vec<usize>,
    pub digest: String,
}

impl FoldSummary {
    pub fn of(folds: &FoldAssignment) -> Self {
        FoldSummary { k: folds.k, seed: folds.seed, subjects: folds.len(), sizes: folds.sizes(), digest: folds.digest() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: String,
    pub b: String,
    /// Mean over folds of `a - b`.
    pub mean_difference: f64,
    pub test: TestResult,
    pub marker: String,
}

/// Repeated-measures ANOVA over methods (folds as subjects) and paired
/// t-tests between every pair of methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub metric: Metric,
    pub methods: Vec<MetricSummary>,
    pub anova: TestResult,
    pub anova_marker: String,
    pub pairwise: Vec<PairwiseComparison>,
}

/// Result of one experiment. The headline numbers describe the final
/// cross-category fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub task: TaskSpec,
    pub model: ModelKind,
    pub folds: FoldSummary,
    /// SHA-256 of the feature tables the experiment read.
    pub data_hash: String,
    pub fold_values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub categories: Vec<MetricSummary>,
    pub measures: Vec<MetricSummary>,
    /// Category outputs compared against each other, when there are several.
    pub comparison: Option<ComparisonTable>,
    pub config: Vec<(String, String)>,
}

impl EvalReport {
    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            label: self.name.clone(),
            measures: self.measures.iter().flat_map(|m| m.measures.iter().copied()).collect(),
            fold_values: self.fold_values.clone(),
            mean: self.mean,
            std: self.std,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(super) fn assemble(
    config: &ExperimentConfig,
    data_hash: String,
    folds: &FoldAssignment,
    targets: &[f64],
    measures: &[PredictionSet],
    categories: &[PredictionSet],
    fused: &PredictionSet,
) -> Result<EvalReport> {
    let summarize = |s: &PredictionSet| -> Result<MetricSummary> {
        Ok(MetricSummary::new(&s.provenance.label, &s.provenance.measures, s.fold_metrics(targets, folds)?))
    };
    let measures: Vec<MetricSummary> = measures.iter().map(summarize).collect::<Result<_>>()?;
    let categories: Vec<MetricSummary> = categories.iter().map(summarize).collect::<Result<_>>()?;
    let total = summarize(fused)?;
    let comparison = if categories.len() >= 2 { Some(compare_methods(config.task.metric, &categories)?) } else { None };
    Ok(EvalReport {
        name: config.name.clone(),
        task: config.task,
        model: config.model.kind,
        folds: FoldSummary::of(folds),
        data_hash,
        fold_values: total.fold_values,
        mean: total.mean,
        std: total.std,
        categories,
        measures,
        comparison,
        config: config.to_pairs(),
    })
}

/// rmANOVA and all pairwise paired t-tests over per-fold values.
pub fn compare_methods(metric: Metric, methods: &[MetricSummary]) -> Result<ComparisonTable> {
    if methods.len() < 2 {
        return Err(Error::InvalidInput("comparison needs at least two methods".into()));
    }
    let n = methods[0].fold_values.len();
    if let Some(m) = methods.iter().find(|m| m.fold_values.len() != n) {
        return Err(Error::FoldMismatch(format!("{} has {} folds, expected {n}", m.label, m.fold_values.len())));
    }
    let table: Vec<Vec<f64>> = (0..n).map(|i| methods.iter().map(|m| m.fold_values[i]).collect()).collect();
    let anova = stats::rm_anova(&table)?;
    let mut pairwise = Vec::new();
    for (i, a) in methods.iter().enumerate() {
        for b in &methods[i + 1..] {
            let test = stats::paired_t_test(&a.fold_values, &b.fold_values)?;
            let diff: Vec<f64> = a.fold_values.iter().zip(&b.fold_values).map(|(x, y)| x - y).collect();
            pairwise.push(PairwiseComparison {
                a: a.label.clone(),
                b: b.label.clone(),
                mean_difference: stats::mean(&diff),
                marker: test.marker().to_string(),
                test,
            });
        }
    }
    Ok(ComparisonTable {
        metric,
        methods: methods.to_vec(),
        anova_marker: anova.marker().to_string(),
        anova,
        pairwise,
    })
}

/// Compares the final fused results of experiments run on the same data
/// with the same folds. Repeated names get a `#n` suffix.
pub fn compare_experiments(reports: &[EvalReport]) -> Result<ComparisonTable> {
    let first = reports.first().ok_or_else(|| Error::InvalidInput("no reports to compare".into()))?;
    for r in &reports[1..] {
        if r.task != first.task {
            return Err(Error::InvalidInput(format!(
                "`{}` predicts {} but `{}` predicts {}",
                first.name, first.task.target, r.name, r.task.target
            )));
        }
        if r.folds.digest != first.folds.digest {
            return Err(Error::FoldMismatch(format!("`{}` and `{}` use different folds", first.name, r.name)));
        }
        if r.data_hash != first.data_hash {
            return Err(Error::FoldMismatch(format!(
                "`{}` and `{}` were computed from different feature tables",
                first.name, r.name
            )));
        }
    }
    let mut methods: Vec<MetricSummary> = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let mut s = r.summary();
        let earlier = reports[..i].iter().filter(|q| q.name == r.name).count();
        if earlier > 0 {
            s.label = format!("{}#{}", r.name, earlier + 1);
        }
        methods.push(s);
    }
    compare_methods(first.task.metric, &methods)
}

fn cell(metric: Metric, mean: f64, std: f64) -> String {
    // a float sum of zeros is -0.0
    let (mean, std) = (mean + 0.0, std + 0.0);
    match metric {
        Metric::PearsonR => format!("{mean:.3}±{std:.3}"),
        Metric::Acc | Metric::Mae => format!("{mean:.2}±{std:.2}"),
    }
}

fn p_text(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn df_text(t: &TestResult) -> String {
    match t.df2 {
        Some(d2) => format!("{}, {}", t.df1, d2),
        None => format!("{}", t.df1),
    }
}

/// Category / measure / mean±std rows, then the fused result.
pub fn render_report(r: &EvalReport) -> String {
    let metric = r.task.metric;
    let mut out = String::new();
    let _ = writeln!(out, "Experiment: {}", r.name);
    let _ = writeln!(
        out,
        "Task: {} ({}, {})   Model: {}   Folds: {} (seed {}, {} subjects)",
        r.task.target,
        format!("{:?}", r.task.kind).to_lowercase(),
        metric,
        r.model,
        r.folds.k,
        r.folds.seed,
        r.folds.subjects
    );
    let _ = writeln!(out);
    let rows: Vec<(String, String, String)> = {
        let mut rows = Vec::new();
        for c in &r.categories {
            let mut first = true;
            for m in c.measures.iter() {
                if let Some(s) = r.measures.iter().find(|s| s.measures == [*m]) {
                    let cat = if first { c.label.clone() } else { String::new() };
                    rows.push((cat, m.to_string(), cell(metric, s.mean, s.std)));
                    first = false;
                }
            }
            if c.measures.len() > 1 {
                rows.push((String::new(), "fused".into(), cell(metric, c.mean, c.std)));
            }
        }
        let all = r.categories.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(" + ");
        rows.push((all, "fused".into(), cell(metric, r.mean, r.std)));
        rows
    };
    let w0 = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0).max("Category".len());
    let w1 = rows.iter().map(|r| r.1.chars().count()).max().unwrap_or(0).max("Measure".len());
    let _ = writeln!(out, "{:<w0$}  {:<w1$}  {}", "Category", "Measure", metric);
    for (c, m, v) in &rows {
        let _ = writeln!(out, "{c:<w0$}  {m:<w1$}  {v}");
    }
    if let Some(cmp) = &r.comparison {
        let _ = writeln!(out);
        out.push_str(&render_comparison(cmp));
    }
    out
}

pub fn render_comparison(t: &ComparisonTable) -> String {
    let mut out = String::new();
    let w = t.methods.iter().map(|m| m.label.chars().count()).max().unwrap_or(0).max("Method".len());
    let _ = writeln!(out, "{:<w$}  {}", "Method", t.metric);
    for m in &t.methods {
        let _ = writeln!(out, "{:<w$}  {}", m.label, cell(t.metric, m.mean, m.std));
    }
    let _ = writeln!(
        out,
        "Repeated-measures ANOVA: F({}) = {:.4}, p = {} {}",
        df_text(&t.anova),
        t.anova.statistic,
        p_text(t.anova.p_value),
        t.anova_marker
    );
    for pw in &t.pairwise {
        let _ = writeln!(
            out,
            "  {} vs {}: diff {:+.4}, t({}) = {:.4}, p = {} {}",
            pw.a,
            pw.b,
            pw.mean_difference,
            df_text(&pw.test),
            pw.test.statistic,
            p_text(pw.test.p_value),
            pw.marker
        );
    }
    out
}
