//! On-disk layout of one subject:
//!
//! ```text
//! <subject_dir>/clusters/cluster_00001.tck
//! <subject_dir>/scalars/cluster_00001.fa.tsf   (optional)
//! <subject_dir>/scalars/cluster_00001.md.tsf   (optional)
//! ```
//!
//! A cluster with no `.tck` file is missing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{parse_tck, parse_tsf, write_tck, write_tsf, FiberCluster, SubjectData, FA, MD};

pub const DEFAULT_CLUSTER_COUNT: usize = 1516;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterLayout {
    pub cluster_count: usize,
}

impl Default for ClusterLayout {
    fn default() -> Self {
        ClusterLayout { cluster_count: DEFAULT_CLUSTER_COUNT }
    }
}

pub fn cluster_file_name(id: u32) -> String {
    format!("cluster_{id:05}")
}

fn channel_suffix(channel: &str) -> Option<&'static str> {
    match channel {
        FA => Some("fa"),
        MD => Some("md"),
        _ => None,
    }
}

/// `cluster_00012` -> 12
fn parse_cluster_stem(stem: &str) -> Option<u32> {
    let digits = stem.strip_prefix("cluster_")?;
    if digits.len() != 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn list_dir(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            out.push((name.to_string(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_id(id: u32, layout: &ClusterLayout, path: &Path) -> Result<()> {
    if id == 0 || id as usize > layout.cluster_count {
        return Err(Error::InvalidInput(format!(
            "{}: cluster id {id} outside 1..={}",
            path.display(),
            layout.cluster_count
        )));
    }
    Ok(())
}

/// Loads one subject directory. The subject id is the directory name.
pub fn load_subject(dir: &Path, layout: &ClusterLayout) -> Result<SubjectData> {
    let subject_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("{}: no subject name", dir.display())))?
        .to_string();

    let mut clusters = BTreeMap::new();
    for (name, path) in list_dir(&dir.join("clusters"))? {
        let Some(id) = name.strip_suffix(".tck").and_then(parse_cluster_stem) else {
            continue;
        };
        check_id(id, layout, &path)?;
        let streamlines = parse_tck(&read(&path)?).map_err(|e| annotate(e, &path))?;
        if streamlines.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{}: cluster file holds no streamlines (omit the file for a missing cluster)",
                path.display()
            )));
        }
        clusters.insert(id, FiberCluster::new(id, streamlines));
    }

    for (name, path) in list_dir(&dir.join("scalars"))? {
        let Some(rest) = name.strip_suffix(".tsf") else { continue };
        let Some((stem, suffix)) = rest.split_once('.') else { continue };
        let channel = match suffix {
            "fa" => FA,
            "md" => MD,
            _ => continue,
        };
        let Some(id) = parse_cluster_stem(stem) else { continue };
        check_id(id, layout, &path)?;
        let Some(cluster) = clusters.remove(&id) else {
            return Err(Error::InvalidInput(format!(
                "{}: scalar file without a matching cluster file",
                path.display()
            )));
        };
        let values = parse_tsf(&read(&path)?).map_err(|e| annotate(e, &path))?;
        let cluster = cluster.with_scalars(channel, values).map_err(|e| annotate(e, &path))?;
        clusters.insert(id, cluster);
    }

    SubjectData::from_clusters(subject_id, layout.cluster_count, clusters.into_values())
}

fn annotate(err: Error, path: &Path) -> Error {
    match err {
        Error::Alignment { index, detail } => {
            Error::Alignment { index, detail: format!("{}: {detail}", path.display()) }
        }
        Error::MalformedHeader(m) => Error::MalformedHeader(format!("{}: {m}", path.display())),
        Error::Truncated(m) => Error::Truncated(format!("{}: {m}", path.display())),
        Error::CorruptData(m) => Error::CorruptData(format!("{}: {m}", path.display())),
        Error::UnsupportedFormat(m) => Error::UnsupportedFormat(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Writes a subject's non-missing clusters (and FA/MD channels) under `dir`.
pub fn write_subject(dir: &Path, subject: &SubjectData) -> Result<()> {
    let cluster_dir = dir.join("clusters");
    let scalar_dir = dir.join("scalars");
    fs::create_dir_all(&cluster_dir).map_err(|e| Error::io(&cluster_dir, e))?;
    for cluster in subject.clusters.iter().filter(|c| !c.is_missing()) {
        let stem = cluster_file_name(cluster.id());
        let path = cluster_dir.join(format!("{stem}.tck"));
        fs::write(&path, write_tck(cluster.streamlines())?).map_err(|e| Error::io(&path, e))?;
        for name in cluster.channel_names() {
            let Some(suffix) = channel_suffix(name) else { continue };
            fs::create_dir_all(&scalar_dir).map_err(|e| Error::io(&scalar_dir, e))?;
            let path = scalar_dir.join(format!("{stem}.{suffix}.tsf"));
            let values = cluster.channel(name).unwrap_or_default();
            fs::write(&path, write_tsf(values)?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::Streamline;

    fn cluster(id: u32) -> FiberCluster {
        let s = |x: f64| Streamline::new(vec![[x, 0.0, 0.0], [x, 1.0, 0.0]]).unwrap();
        FiberCluster::new(id, vec![s(0.0), s(1.0)])
            .with_scalars(FA, vec![vec![0.25, 0.5], vec![0.75, 1.0]])
            .unwrap()
    }

    #[test]
    fn sparse_directory_loads_missing_slots() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("subj01");
        let subject = SubjectData::from_clusters("subj01", 1516, [cluster(1), cluster(7)]).unwrap();
        write_subject(&dir, &subject).unwrap();

        let loaded = load_subject(&dir, &ClusterLayout::default()).unwrap();
        assert_eq!(loaded.subject_id, "subj01");
        assert_eq!(loaded.clusters.iter().filter(|c| !c.is_missing()).count(), 2);
        assert_eq!(loaded.clusters.iter().filter(|c| c.is_missing()).count(), 1514);
        assert_eq!(loaded, subject);
        assert_eq!(load_subject(&dir, &ClusterLayout::default()).unwrap(), loaded);
    }

    #[test]
    fn empty_directory_is_all_missing() {
        let tmp = tempfile::tempdir().unwrap();
        let loaded = load_subject(tmp.path(), &ClusterLayout::default()).unwrap();
        assert_eq!(loaded.clusters.len(), 1516);
        assert!(loaded.clusters.iter().all(FiberCluster::is_missing));
    }

    #[test]
    fn orphan_scalar_file_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir_all(tmp.path().join("scalars")).unwrap();
        fs::write(
            tmp.path().join("scalars/cluster_00003.fa.tsf"),
            write_tsf(&[vec![0.1]]).unwrap(),
        )
        .unwrap();
        let err = load_subject(tmp.path(), &ClusterLayout::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(ref m) if m.contains("cluster_00003")), "{err}");
    }

    #[test]
    fn misaligned_scalars_are_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let subject = SubjectData::from_clusters("s", 5, [cluster(2)]).unwrap();
        write_subject(tmp.path(), &subject).unwrap();
        fs::write(
            tmp.path().join("scalars/cluster_00002.fa.tsf"),
            write_tsf(&[vec![0.1, 0.2], vec![0.3]]).unwrap(),
        )
        .unwrap();
        let err = load_subject(tmp.path(), &ClusterLayout { cluster_count: 5 }).unwrap_err();
        assert!(matches!(err, Error::Alignment { index: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_cluster_id() {
        let tmp = tempfile::tempdir().unwrap();
        let subject = SubjectData::from_clusters("s", 40, [cluster(33)]).unwrap();
        write_subject(tmp.path(), &subject).unwrap();
        assert!(load_subject(tmp.path(), &ClusterLayout { cluster_count: 32 }).is_err());
    }
}
