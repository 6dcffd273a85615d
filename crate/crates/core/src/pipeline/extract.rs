//! Feature extraction over a directory of subject directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{feature_file_name, load_subject, write_feature_csv, ClusterLayout};
use crate::measures::{extract_features, FeatureMatrix, MeasureKind};
use crate::normalize::add_normalized_variants;

/// Sorted subdirectories of `data_dir` that hold a `clusters/` directory.
pub fn subject_dirs(data_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(data_dir).map_err(|e| Error::io(data_dir, e))? {
        let path = entry.map_err(|e| Error::io(data_dir, e))?.path();
        if path.join("clusters").is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Loads every subject under `data_dir` and returns one table per measure
/// (the six raw measures, plus the four `-N` variants when `normalize`).
/// Subjects are processed in parallel; rows follow directory-name order.
pub fn extract_cohort(
    data_dir: &Path,
    layout: &ClusterLayout,
    normalize: bool,
) -> Result<BTreeMap<MeasureKind, FeatureMatrix>> {
    let dirs = subject_dirs(data_dir)?;
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no subject directories (expected <subject>/clusters/)",
            data_dir.display()
        )));
    }
    let rows = dirs
        .par_iter()
        .map(|dir| {
            let subject = load_subject(dir, layout)?;
            let mut f = extract_features(&subject)?;
            if normalize {
                add_normalized_variants(&mut f)?;
            }
            Ok((subject.subject_id, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let kinds: Vec<MeasureKind> = rows[0].1.keys().copied().collect();
    kinds
        .into_iter()
        .map(|kind| {
            let vectors = rows.iter().map(|(id, f)| (id.clone(), f[&kind].clone()));
            Ok((kind, FeatureMatrix::from_vectors(kind, vectors)?))
        })
        .collect()
}

/// Writes `<measure>.csv` for every table and returns the paths written.
pub fn write_feature_tables(dir: &Path, features: &BTreeMap<MeasureKind, FeatureMatrix>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    features
        .iter()
        .map(|(&kind, m)| {
            let path = dir.join(feature_file_name(kind));
            std::fs::write(&path, write_feature_csv(m)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
