use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Microstructure,
    Connectivity,
    Shape,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Microstructure => "Microstructure",
            Category::Connectivity => "Connectivity",
            Category::Shape => "Shape",
        })
    }
}

/// Per-cluster measures. `*N` kinds are brain-size normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "FA")]
    Fa,
    #[serde(rename = "MD")]
    Md,
    #[serde(rename = "NoS")]
    Nos,
    Length,
    Diameter,
    Elongation,
    #[serde(rename = "NoS-N")]
    NosN,
    #[serde(rename = "Length-N")]
    LengthN,
    #[serde(rename = "Diameter-N")]
    DiameterN,
    #[serde(rename = "Elongation-N")]
    ElongationN,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 10] = [
        MeasureKind::Fa,
        MeasureKind::Md,
        MeasureKind::Nos,
        MeasureKind::Length,
        MeasureKind::Diameter,
        MeasureKind::Elongation,
        MeasureKind::NosN,
        MeasureKind::LengthN,
        MeasureKind::DiameterN,
        MeasureKind::ElongationN,
    ];

    pub const RAW: [MeasureKind; 6] = [
        MeasureKind::Fa,
        MeasureKind::Md,
        MeasureKind::Nos,
        MeasureKind::Length,
        MeasureKind::Diameter,
        MeasureKind::Elongation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Fa => "FA",
            MeasureKind::Md => "MD",
            MeasureKind::Nos => "NoS",
            MeasureKind::Length => "Length",
            MeasureKind::Diameter => "Diameter",
            MeasureKind::Elongation => "Elongation",
            MeasureKind::NosN => "NoS-N",
            MeasureKind::LengthN => "Length-N",
            MeasureKind::DiameterN => "Diameter-N",
            MeasureKind::ElongationN => "Elongation-N",
        }
    }

    pub fn category(self) -> Category {
        match self {
            MeasureKind::Fa | MeasureKind::Md => Category::Microstructure,
            MeasureKind::Nos | MeasureKind::NosN => Category::Connectivity,
            _ => Category::Shape,
        }
    }

    pub fn is_normalized(self) -> bool {
        matches!(
            self,
            MeasureKind::NosN | MeasureKind::LengthN | MeasureKind::DiameterN | MeasureKind::ElongationN
        )
    }

    /// The `-N` counterpart; `None` for microstructure and already-normalized kinds.
    pub fn normalized(self) -> Option<MeasureKind> {
        match self {
            MeasureKind::Nos => Some(MeasureKind::NosN),
            MeasureKind::Length => Some(MeasureKind::LengthN),
            MeasureKind::Diameter => Some(MeasureKind::DiameterN),
            MeasureKind::Elongation => Some(MeasureKind::ElongationN),
            _ => None,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        MeasureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.name().replace('-', "_").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown measure `{s}`")))
    }
}

/// One measure over all clusters of one subject; index `i` holds cluster `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub measure: MeasureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(measure: MeasureKind, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{measure} vector has non-finite values")));
        }
        Ok(FeatureVector { measure, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One measure stacked over subjects: row `r` belongs to `subject_ids[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub measure: MeasureKind,
    pub subject_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(measure: MeasureKind, subject_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if subject_ids.len() != values.nrows() {
            return Err(Error::Dimension(format!(
                "{} subject ids for {} rows",
                subject_ids.len(),
                values.nrows()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = subject_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{measure} matrix has non-finite values")));
        }
        Ok(FeatureMatrix { measure, subject_ids, values })
    }

    /// Stacks per-subject vectors of the same measure and length.
    pub fn from_vectors(
        measure: MeasureKind,
        rows: impl IntoIterator<Item = (String, FeatureVector)>,
    ) -> Result<Self> {
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        let mut width = None;
        for (id, v) in rows {
            if v.measure != measure {
                return Err(Error::InvalidInput(format!(
                    "vector for {id} is {} not {measure}",
                    v.measure
                )));
            }
            if *width.get_or_insert(v.len()) != v.len() {
                return Err(Error::Dimension(format!("vector for {id} has length {}", v.len())));
            }
            ids.push(id);
            flat.extend(v.values);
        }
        let width = width.unwrap_or(0);
        let values = Array2::from_shape_vec((ids.len(), width), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(measure, ids, values)
    }

    pub fn cluster_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn row_of(&self, subject_id: &str) -> Option<ArrayView1<'_, f64>> {
        let r = self.subject_ids.iter().position(|s| s == subject_id)?;
        Some(self.values.row(r))
    }
}
