//! Brain-size normalization of connectivity/shape vectors and per-subject
//! max-min scaling of model inputs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measures::{missing_mask_from_nos, FeatureVector, MeasureKind};

/// Divides `v` by its mean over non-missing clusters, producing the `-N`
/// kind. Missing clusters stay 0.
pub fn brain_size_normalize(v: &FeatureVector, missing: &[bool]) -> Result<FeatureVector> {
    let target = v.measure.normalized().ok_or_else(|| {
        Error::InvalidInput(format!("{} has no brain-size normalized variant", v.measure))
    })?;
    if missing.len() != v.len() {
        return Err(Error::Dimension(format!(
            "missing mask has {} entries for a vector of {}",
            missing.len(),
            v.len()
        )));
    }
    let (sum, count) = v
        .values
        .iter()
        .zip(missing)
        .filter(|(_, &m)| !m)
        .fold((0.0, 0usize), |(s, n), (x, _)| (s + x, n + 1));
    if count == 0 {
        return Err(Error::NoReference);
    }
    let reference = sum / count as f64;
    let any_positive = v.values.iter().zip(missing).any(|(&x, &m)| !m && x > 0.0);
    if reference <= 0.0 {
        if any_positive {
            return Err(Error::DegenerateReference(reference));
        }
        return FeatureVector::new(target, vec![0.0; v.len()]);
    }
    let values = v
        .values
        .iter()
        .zip(missing)
        .map(|(&x, &m)| if m { 0.0 } else { x / reference })
        .collect();
    FeatureVector::new(target, values)
}

/// Adds the `-N` variant of every connectivity and shape vector present.
/// Missing clusters are read off the NoS vector.
pub fn add_normalized_variants(features: &mut BTreeMap<MeasureKind, FeatureVector>) -> Result<()> {
    let nos = features
        .get(&MeasureKind::Nos)
        .ok_or_else(|| Error::InvalidInput("normalization needs the NoS vector".into()))?;
    let missing = missing_mask_from_nos(nos);
    let mut added = Vec::new();
    for v in features.values() {
        if v.measure.normalized().is_some() {
            added.push(brain_size_normalize(v, &missing)?);
        }
    }
    for v in added {
        features.insert(v.measure, v);
    }
    Ok(())
}

/// Scales values to [0, 1] by the vector's own min and max; a constant
/// vector maps to zeros.
pub fn minmax_normalize(v: &FeatureVector) -> FeatureVector {
    FeatureVector { measure: v.measure, values: minmax_values(&v.values) }
}

pub fn minmax_values(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if values.is_empty() || range <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&x| ((x - lo) / range).clamp(0.0, 1.0)).collect()
}
