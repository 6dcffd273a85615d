//! Streamline/scalar track files, per-subject cluster directories, and the
//! phenotype and feature CSV formats.

mod features;
mod layout;
mod phenotype;
mod track;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use features::{feature_file_name, read_feature_csv, read_feature_table, write_feature_csv};
pub use layout::{cluster_file_name, load_subject, write_subject, ClusterLayout, DEFAULT_CLUSTER_COUNT};
pub use phenotype::{load_phenotypes, write_phenotypes, PhenotypeRecord, Target};
pub use track::{parse_tck, parse_tsf, write_tck, write_tsf, TCK_MAGIC, TSF_MAGIC};

/// A point in scanner space, millimetres.
pub type Point3 = [f64; 3];

pub const FA: &str = "FA";
pub const MD: &str = "MD";

/// One ordered polyline. Never empty, every coordinate finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    points: Vec<Point3>,
}

impl Streamline {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("streamline has no points".into()));
        }
        if let Some(p) = points.iter().find(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
        }
        Ok(Streamline { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies `f` to every point. The caller must keep coordinates finite.
    pub fn map_points(&self, f: impl Fn(Point3) -> Point3) -> Result<Self> {
        Streamline::new(self.points.iter().map(|&p| f(p)).collect())
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Streamline { points }
    }
}

/// The streamlines assigned to one atlas cluster, plus optional per-point
/// scalar channels aligned with them. An empty cluster means "missing".
#[derive(Debug, Clone, PartialEq)]
pub struct FiberCluster {
    id: u32,
    streamlines: Vec<Streamline>,
    channels: BTreeMap<String, Vec<Vec<f64>>>,
}

impl FiberCluster {
    pub fn new(id: u32, streamlines: Vec<Streamline>) -> Self {
        FiberCluster { id, streamlines, channels: BTreeMap::new() }
    }

    pub fn missing(id: u32) -> Self {
        Self::new(id, Vec::new())
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn streamlines(&self) -> &[Streamline] {
        &self.streamlines
    }

    pub fn is_missing(&self) -> bool {
        self.streamlines.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[Vec<f64>]> {
        self.channels.get(name).map(Vec::as_slice)
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    /// Attaches (or replaces) a scalar channel. See [`attach_scalars`].
    pub fn with_scalars(mut self, name: &str, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != self.streamlines.len() {
            return Err(Error::Alignment {
                index: values.len().min(self.streamlines.len()),
                detail: format!(
                    "channel `{name}` has {} tracks for {} streamlines",
                    values.len(),
                    self.streamlines.len()
                ),
            });
        }
        for (index, (track, s)) in values.iter().zip(&self.streamlines).enumerate() {
            if track.len() != s.len() {
                return Err(Error::Alignment {
                    index,
                    detail: format!(
                        "channel `{name}` has {} values for {} points",
                        track.len(),
                        s.len()
                    ),
                });
            }
            if track.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "channel `{name}` has a non-finite value on streamline {index}"
                )));
            }
        }
        self.channels.insert(name.to_string(), values);
        Ok(self)
    }

    /// Same cluster with streamlines reordered by `order` (a permutation of
    /// indices); channels follow their streamlines.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let streamlines = order.iter().map(|&i| self.streamlines[i].clone()).collect();
        let channels = self
            .channels
            .iter()
            .map(|(k, v)| (k.clone(), order.iter().map(|&i| v[i].clone()).collect()))
            .collect();
        FiberCluster { id: self.id, streamlines, channels }
    }

    /// Same cluster with every point passed through `f`; channels unchanged.
    pub fn map_points(&self, f: impl Fn(Point3) -> Point3 + Copy) -> Result<Self> {
        let streamlines = self
            .streamlines
            .iter()
            .map(|s| s.map_points(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(FiberCluster { id: self.id, streamlines, channels: self.channels.clone() })
    }
}

/// Adds a named per-point scalar channel to `cluster`.
///
/// `values` must hold one list per streamline, each as long as that
/// streamline's point count. Attaching a name that already exists replaces
/// the previous channel.
pub fn attach_scalars(cluster: FiberCluster, name: &str, values: Vec<Vec<f64>>) -> Result<FiberCluster> {
    cluster.with_scalars(name, values)
}

/// All clusters of one subject (dense by cluster id) plus its phenotypes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    pub subject_id: String,
    pub clusters: Vec<FiberCluster>,
    pub phenotypes: PhenotypeRecord,
}

impl SubjectData {
    /// Builds a subject from sparse clusters, filling every absent id in
    /// `1..=cluster_count` with a missing cluster.
    pub fn from_clusters(
        subject_id: impl Into<String>,
        cluster_count: usize,
        clusters: impl IntoIterator<Item = FiberCluster>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if subject_id.is_empty() {
            return Err(Error::InvalidInput("subject id is empty".into()));
        }
        let mut slots: Vec<FiberCluster> =
            (1..=cluster_count as u32).map(FiberCluster::missing).collect();
        for c in clusters {
            let id = c.id() as usize;
            if id == 0 || id > cluster_count {
                return Err(Error::InvalidInput(format!(
                    "cluster id {id} outside 1..={cluster_count}"
                )));
            }
            slots[id - 1] = c;
        }
        Ok(SubjectData { subject_id, clusters: slots, phenotypes: PhenotypeRecord::default() })
    }

    pub fn cluster(&self, id: u32) -> Option<&FiberCluster> {
        self.clusters.get((id as usize).checked_sub(1)?)
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }
}
