//! Prediction tasks and the shape of model outputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Acc,
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "r")]
    PearsonR,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Acc => "Acc",
            Metric::Mae => "MAE",
            Metric::PearsonR => "r",
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Mae)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A phenotype to predict together with its model output type and metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub target: Target,
    pub kind: TaskKind,
    pub metric: Metric,
}

impl TaskSpec {
    /// Sex is classified (accuracy), age regressed (MAE), cognitive scores
    /// regressed (Pearson r).
    pub fn for_target(target: Target) -> Self {
        let (kind, metric) = match target {
            Target::Sex => (TaskKind::Classification, Metric::Acc),
            Target::Age => (TaskKind::Regression, Metric::Mae),
            Target::Tpvt | Target::Torrt | Target::Tfat => (TaskKind::Regression, Metric::PearsonR),
        };
        TaskSpec { target, kind, metric }
    }

    pub fn validate(&self) -> Result<()> {
        if *self != TaskSpec::for_target(self.target) {
            return Err(Error::Config(format!(
                "target {} must be {:?} scored by {}",
                self.target,
                TaskSpec::for_target(self.target).kind,
                TaskSpec::for_target(self.target).metric
            )));
        }
        Ok(())
    }
}

impl FromStr for TaskSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(TaskSpec::for_target(s.parse()?))
    }
}

/// Per-subject model outputs: class-probability pairs or scalar values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictions {
    Probabilities(Vec<[f64; 2]>),
    Values(Vec<f64>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Probabilities(p) => p.len(),
            Predictions::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            Predictions::Probabilities(_) => TaskKind::Classification,
            Predictions::Values(_) => TaskKind::Regression,
        }
    }

    /// Argmax labels; ties go to class 0.
    pub fn labels(&self) -> Option<Vec<u8>> {
        match self {
            Predictions::Probabilities(p) => Some(p.iter().map(|q| u8::from(q[1] > q[0])).collect()),
            Predictions::Values(_) => None,
        }
    }

    /// Subset in the order of `indices`.
    pub fn select(&self, indices: &[usize]) -> Predictions {
        match self {
            Predictions::Probabilities(p) => Predictions::Probabilities(indices.iter().map(|&i| p[i]).collect()),
            Predictions::Values(v) => Predictions::Values(indices.iter().map(|&i| v[i]).collect()),
        }
    }
}
