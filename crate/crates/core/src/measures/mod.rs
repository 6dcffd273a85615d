//! Per-cluster microstructure (FA, MD), connectivity (NoS) and shape
//! (length, diameter, elongation) measures.

mod eig;
mod kind;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{FiberCluster, Point3, Streamline, SubjectData, FA, MD};

pub use eig::{sym3_eig_max, sym3_eigenvalues, Sym3};
pub use kind::{Category, FeatureMatrix, FeatureVector, MeasureKind};

/// Below this diameter (mm) elongation is reported as 0.
pub const ELONGATION_EPS: f64 = 1e-9;

fn dist(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Polyline arc length in mm.
pub fn streamline_length(s: &Streamline) -> f64 {
    s.points().windows(2).map(|w| dist(&w[0], &w[1])).sum()
}

/// The point at half the arc length, interpolated within its segment.
pub fn streamline_midpoint(s: &Streamline) -> Point3 {
    let pts = s.points();
    let half = 0.5 * streamline_length(s);
    let mut walked = 0.0;
    for w in pts.windows(2) {
        let seg = dist(&w[0], &w[1]);
        if seg > 0.0 && walked + seg >= half {
            let t = ((half - walked) / seg).clamp(0.0, 1.0);
            return std::array::from_fn(|k| w[0][k] + t * (w[1][k] - w[0][k]));
        }
        walked += seg;
    }
    pts[0]
}

/// Sample covariance (denominator n - 1) of the streamline midpoints.
/// Requires at least two streamlines.
pub fn midpoint_covariance(c: &FiberCluster) -> Option<Sym3> {
    let mids: Vec<Point3> = c.streamlines().iter().map(streamline_midpoint).collect();
    let n = mids.len();
    if n < 2 {
        return None;
    }
    let mut mean = [0.0; 3];
    for m in &mids {
        for k in 0..3 {
            mean[k] += m[k];
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut cov = [[0.0; 3]; 3];
    for m in &mids {
        let d = [m[0] - mean[0], m[1] - mean[1], m[2] - mean[2]];
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    Some(cov)
}

/// `2 * sqrt(e_max)` of the midpoint covariance; 0 for clusters with fewer
/// than two streamlines.
pub fn cluster_diameter(c: &FiberCluster) -> f64 {
    let Some(cov) = midpoint_covariance(c) else {
        return 0.0;
    };
    // A covariance matrix is symmetric by construction.
    let e_max = sym3_eig_max(&cov).expect("covariance is symmetric");
    2.0 * e_max.max(0.0).sqrt()
}

pub fn cluster_mean_length(c: &FiberCluster) -> f64 {
    let n = c.streamlines().len();
    if n == 0 {
        return 0.0;
    }
    c.streamlines().iter().map(streamline_length).sum::<f64>() / n as f64
}

fn elongation(mean_length: f64, diameter: f64, n: usize) -> f64 {
    if n <= 1 || diameter <= ELONGATION_EPS {
        0.0
    } else {
        mean_length / diameter
    }
}

/// Mean length over diameter; 0 when n <= 1 or the diameter is (near) zero.
pub fn cluster_elongation(c: &FiberCluster) -> f64 {
    elongation(cluster_mean_length(c), cluster_diameter(c), c.streamlines().len())
}

/// Mean of a per-point channel pooled over every point of every streamline.
pub fn cluster_scalar_mean(c: &FiberCluster, channel: &str) -> Result<f64> {
    if c.is_missing() {
        return Ok(0.0);
    }
    let tracks = c
        .channel(channel)
        .ok_or_else(|| Error::MissingChannel { cluster: c.id(), channel: channel.to_string() })?;
    let (sum, count) = tracks
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterMeasures {
    pub length: f64,
    pub diameter: f64,
    pub elongation: f64,
    pub nos: f64,
    pub fa: f64,
    pub md: f64,
}

impl ClusterMeasures {
    pub fn get(&self, kind: MeasureKind) -> Option<f64> {
        match kind {
            MeasureKind::Fa => Some(self.fa),
            MeasureKind::Md => Some(self.md),
            MeasureKind::Nos => Some(self.nos),
            MeasureKind::Length => Some(self.length),
            MeasureKind::Diameter => Some(self.diameter),
            MeasureKind::Elongation => Some(self.elongation),
            _ => None,
        }
    }
}

/// Connectivity and shape measures only; `fa` and `md` are left at 0.
pub fn cluster_geometry(c: &FiberCluster) -> ClusterMeasures {
    let n = c.streamlines().len();
    if n == 0 {
        return ClusterMeasures::default();
    }
    let length = cluster_mean_length(c);
    let diameter = cluster_diameter(c);
    ClusterMeasures {
        length,
        diameter,
        elongation: elongation(length, diameter, n),
        nos: n as f64,
        fa: 0.0,
        md: 0.0,
    }
}

/// All six raw measures. Non-missing clusters must carry FA and MD channels.
pub fn cluster_measures(c: &FiberCluster) -> Result<ClusterMeasures> {
    Ok(ClusterMeasures {
        fa: cluster_scalar_mean(c, FA)?,
        md: cluster_scalar_mean(c, MD)?,
        ..cluster_geometry(c)
    })
}

/// The six raw feature vectors of one subject (cluster `i` at index `i - 1`).
pub fn extract_features(subject: &SubjectData) -> Result<BTreeMap<MeasureKind, FeatureVector>> {
    extract_with(subject, true)
}

/// Like [`extract_features`] but without FA/MD, for geometry-only data.
pub fn extract_geometry_features(subject: &SubjectData) -> Result<BTreeMap<MeasureKind, FeatureVector>> {
    extract_with(subject, false)
}

fn extract_with(
    subject: &SubjectData,
    microstructure: bool,
) -> Result<BTreeMap<MeasureKind, FeatureVector>> {
    let per_cluster = subject
        .clusters
        .iter()
        .map(|c| if microstructure { cluster_measures(c) } else { Ok(cluster_geometry(c)) })
        .collect::<Result<Vec<_>>>()?;
    let kinds: &[MeasureKind] = if microstructure { &MeasureKind::RAW } else { &MeasureKind::RAW[2..] };
    kinds
        .iter()
        .map(|&k| {
            let values = per_cluster.iter().map(|m| m.get(k).unwrap_or(0.0)).collect();
            Ok((k, FeatureVector::new(k, values)?))
        })
        .collect()
}

/// Clusters with no streamlines, recovered from a NoS vector.
pub fn missing_mask_from_nos(nos: &FeatureVector) -> Vec<bool> {
    nos.values.iter().map(|&v| v == 0.0).collect()
}

pub fn missing_mask(subject: &SubjectData) -> Vec<bool> {
    subject.clusters.iter().map(FiberCluster::is_missing).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sl(points: &[[f64; 3]]) -> Streamline {
        Streamline::new(points.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn lengths() {
        assert_eq!(streamline_length(&sl(&[[0.0; 3], [3.0, 0.0, 0.0], [3.0, 4.0, 0.0]])), 7.0);
        assert_eq!(streamline_length(&sl(&[[1.0, 2.0, 3.0]])), 0.0);
        let line: Vec<_> = (0..11).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert_eq!(streamline_length(&sl(&line)), 10.0);
    }

    #[test]
    fn midpoints() {
        assert_eq!(streamline_midpoint(&sl(&[[0.0; 3], [2.0, 0.0, 0.0]])), [1.0, 0.0, 0.0]);
        assert_eq!(
            streamline_midpoint(&sl(&[[0.0; 3], [3.0, 0.0, 0.0], [3.0, 4.0, 0.0]])),
            [3.0, 0.5, 0.0]
        );
        assert_eq!(streamline_midpoint(&sl(&[[5.0, 5.0, 5.0]])), [5.0, 5.0, 5.0]);
        // repeated points do not break interpolation
        assert_eq!(
            streamline_midpoint(&sl(&[[0.0; 3], [0.0; 3], [4.0, 0.0, 0.0], [4.0, 0.0, 0.0]])),
            [2.0, 0.0, 0.0]
        );
    }

    #[test]
    fn diameter_cases() {
        let c = FiberCluster::new(1, vec![sl(&[[1.0, 0.0, 0.0]]), sl(&[[-1.0, 0.0, 0.0]])]);
        assert!(close(cluster_diameter(&c), 2.0 * 2f64.sqrt(), 1e-15));
        let same = FiberCluster::new(1, vec![sl(&[[0.0; 3], [2.0, 0.0, 0.0]]); 3]);
        assert_eq!(cluster_diameter(&same), 0.0);
        let single = FiberCluster::new(1, vec![sl(&[[0.0; 3], [2.0, 0.0, 0.0]])]);
        assert_eq!(cluster_diameter(&single), 0.0);
        assert_eq!(cluster_diameter(&FiberCluster::missing(1)), 0.0);
    }

    #[test]
    fn elongation_cases() {
        // two streamlines of length 10 whose midpoints are 2 mm apart along y:
        // covariance yy = 2, diameter 2*sqrt(2)... use a spacing giving diameter 2:
        // midpoints at y = +-1/sqrt(2) -> var = 1 -> diameter 2.
        let h = 0.5f64.sqrt();
        let c = FiberCluster::new(
            1,
            vec![sl(&[[0.0, h, 0.0], [10.0, h, 0.0]]), sl(&[[0.0, -h, 0.0], [10.0, -h, 0.0]])],
        );
        assert!(close(cluster_diameter(&c), 2.0, 1e-12));
        assert!(close(cluster_elongation(&c), 5.0, 1e-12));
        let single = FiberCluster::new(1, vec![sl(&[[0.0; 3], [2.0, 0.0, 0.0]])]);
        assert_eq!(cluster_elongation(&single), 0.0);
        let same = FiberCluster::new(1, vec![sl(&[[0.0; 3], [2.0, 0.0, 0.0]]); 2]);
        assert_eq!(cluster_elongation(&same), 0.0);
    }

    #[test]
    fn scalar_means_are_pooled() {
        let c = FiberCluster::new(1, vec![sl(&[[0.0; 3], [1.0, 0.0, 0.0]]), sl(&[[0.0; 3]])])
            .with_scalars(FA, vec![vec![0.2, 0.4], vec![0.6]])
            .unwrap();
        assert!(close(cluster_scalar_mean(&c, FA).unwrap(), 0.4, 1e-15));
        // the mean of per-streamline means would be 0.45
        let c2 = FiberCluster::new(1, vec![sl(&[[0.0; 3], [1.0, 0.0, 0.0]]), sl(&[[0.0; 3]])])
            .with_scalars(FA, vec![vec![0.2, 0.4], vec![0.7]])
            .unwrap();
        let pooled = cluster_scalar_mean(&c2, FA).unwrap();
        assert!(close(pooled, 1.3 / 3.0, 1e-15));
        assert!((pooled - 0.45).abs() > 1e-3);
        assert_eq!(cluster_scalar_mean(&FiberCluster::missing(2), FA).unwrap(), 0.0);
        let constant = FiberCluster::new(1, vec![sl(&[[0.0; 3], [1.0, 0.0, 0.0]])])
            .with_scalars(MD, vec![vec![0.3, 0.3]])
            .unwrap();
        assert!(close(cluster_scalar_mean(&constant, MD).unwrap(), 0.3, 1e-15));
        assert!(matches!(
            cluster_scalar_mean(&constant, FA),
            Err(Error::MissingChannel { cluster: 1, .. })
        ));
    }

    #[test]
    fn aggregate_measures() {
        assert_eq!(cluster_measures(&FiberCluster::missing(9)).unwrap(), ClusterMeasures::default());
        let c = FiberCluster::new(
            1,
            vec![sl(&[[0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]), sl(&[[0.0, -1.0, 0.0], [1.0, -1.0, 0.0]])],
        );
        let m = cluster_geometry(&c);
        assert_eq!(m.length, 1.0);
        assert_eq!(m.nos, 2.0);
        assert!(close(m.diameter, 2.0 * 2f64.sqrt(), 1e-15));
        assert!(close(m.elongation, 1.0 / (2.0 * 2f64.sqrt()), 1e-15));
        assert_eq!(cluster_geometry(&c.permuted(&[1, 0])), m);
    }

    #[test]
    fn extract_single_populated_cluster() {
        let c = FiberCluster::new(3, vec![sl(&[[0.0; 3], [4.0, 0.0, 0.0]]), sl(&[[0.0, 2.0, 0.0], [4.0, 2.0, 0.0]])])
            .with_scalars(FA, vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .unwrap()
            .with_scalars(MD, vec![vec![1e-3, 1e-3], vec![1e-3, 1e-3]])
            .unwrap();
        let subject = SubjectData::from_clusters("s", 1516, [c]).unwrap();
        let f = extract_features(&subject).unwrap();
        assert_eq!(f.len(), 6);
        for v in f.values() {
            assert_eq!(v.len(), 1516);
            for (i, x) in v.values.iter().enumerate() {
                if i != 2 {
                    assert_eq!(*x, 0.0);
                }
            }
            assert!(v.values[2] > 0.0, "{}", v.measure);
        }
        assert_eq!(extract_features(&subject).unwrap(), f);

        let empty = SubjectData::from_clusters("e", 1516, []).unwrap();
        let f = extract_features(&empty).unwrap();
        assert!(f.values().all(|v| v.values.iter().all(|&x| x == 0.0)));
    }
}
