//! Synthetic fiber bundles with known geometry, and cohorts of subjects whose
//! phenotypes are planted linear functions of chosen cluster features.
//!
//! A bundle is a centerline (straight, or a circular arc in the xy-plane)
//! copied once per streamline and shifted by a Gaussian offset in the plane
//! perpendicular to the centerline tangent at its midpoint, so that the
//! midpoint covariance tends to σ² in that plane and the diameter to 2σ.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatconf::{parse_list, render, FlatConfig};
use crate::io::{write_phenotypes, write_subject, FiberCluster, PhenotypeRecord, Point3, Streamline, SubjectData, Target, FA, MD};
use crate::measures::{extract_features, FeatureMatrix, FeatureVector, MeasureKind};
use crate::normalize::add_normalized_variants;
use crate::pipeline::Cohort;
use crate::seed::{derive_seed, label, rng};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centerline {
    Straight,
    /// Circular arc turning through `angle` radians over the bundle length.
    Arc { angle: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    /// Centerline length (mm).
    pub length: f64,
    pub centerline: Centerline,
    /// Radial spread (mm).
    pub sigma: f64,
    pub streamlines: usize,
    /// Points per streamline.
    pub points: usize,
    /// Per-point Gaussian jitter (mm).
    pub jitter: f64,
    pub fa: f64,
    pub md: f64,
    /// Relative sd of per-point FA/MD noise.
    pub scalar_noise: f64,
    pub seed: u64,
}

impl BundleSpec {
    pub fn new(length: f64, sigma: f64, streamlines: usize, seed: u64) -> Self {
        BundleSpec {
            length,
            centerline: Centerline::Straight,
            sigma,
            streamlines,
            points: 20,
            jitter: 0.0,
            fa: 0.45,
            md: 8e-4,
            scalar_noise: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length > 0.0
            && self.length.is_finite()
            && self.sigma >= 0.0
            && self.sigma.is_finite()
            && self.streamlines >= 1
            && self.points >= 2
            && self.jitter >= 0.0
            && self.jitter.is_finite()
            && (0.0..=1.0).contains(&self.fa)
            && self.md >= 0.0
            && self.md.is_finite()
            && self.scalar_noise >= 0.0
            && self.scalar_noise.is_finite();
        if !ok {
            return Err(Error::InvalidInput(format!("invalid bundle {self:?}")));
        }
        if let Centerline::Arc { angle } = self.centerline {
            if !(angle > 0.0 && angle < 2.0 * PI) {
                return Err(Error::InvalidInput(format!("arc angle {angle} outside (0, 2π)")));
            }
        }
        Ok(())
    }

    /// Centerline position at arc length `s`.
    pub fn centerline_at(&self, s: f64) -> Point3 {
        match self.centerline {
            Centerline::Straight => [s, 0.0, 0.0],
            Centerline::Arc { angle } => {
                let r = self.length / angle;
                [r * (s / r).sin(), r * (1.0 - (s / r).cos()), 0.0]
            }
        }
    }

    /// Two unit vectors spanning the plane perpendicular to the tangent at
    /// the centerline midpoint.
    pub fn midpoint_normals(&self) -> [Point3; 2] {
        let phi = match self.centerline {
            Centerline::Straight => 0.0,
            Centerline::Arc { angle } => angle / 2.0,
        };
        [[-phi.sin(), phi.cos(), 0.0], [0.0, 0.0, 1.0]]
    }
}

fn normal(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

pub fn gen_bundle(spec: &BundleSpec, id: u32) -> Result<FiberCluster> {
    spec.validate()?;
    let mut r = rng(spec.seed);
    let step = spec.length / (spec.points - 1) as f64;
    let base: Vec<Point3> = (0..spec.points).map(|i| spec.centerline_at(i as f64 * step)).collect();
    let [u, w] = spec.midpoint_normals();
    let mut streamlines = Vec::with_capacity(spec.streamlines);
    let mut fa = Vec::with_capacity(spec.streamlines);
    let mut md = Vec::with_capacity(spec.streamlines);
    for _ in 0..spec.streamlines {
        let (a, b) = (spec.sigma * normal(&mut r), spec.sigma * normal(&mut r));
        let offset = [0, 1, 2].map(|d| a * u[d] + b * w[d]);
        let points: Vec<Point3> = base
            .iter()
            .map(|p| {
                let mut q = [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]];
                if spec.jitter > 0.0 {
                    for x in &mut q {
                        *x += spec.jitter * normal(&mut r);
                    }
                }
                q
            })
            .collect();
        streamlines.push(Streamline::new(points)?);
        let mut channel = |mean: f64, hi: f64| -> Vec<f64> {
            (0..spec.points)
                .map(|_| (mean * (1.0 + spec.scalar_noise * normal(&mut r))).clamp(0.0, hi))
                .collect()
        };
        fa.push(channel(spec.fa, 1.0));
        md.push(channel(spec.md, f64::INFINITY));
    }
    FiberCluster::new(id, streamlines).with_scalars(FA, fa)?.with_scalars(MD, md)
}

/// One feature's contribution to a phenotype score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub measure: MeasureKind,
    pub cluster: u32,
    /// Effect of a one-sd change of the feature.
    pub beta: f64,
}

impl std::str::FromStr for Planted {
    type Err = Error;

    /// `Measure:cluster:beta`, e.g. `Length:3:0.6`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [m, c, b] = parts[..] else {
            return Err(Error::Config(format!("`{s}` is not Measure:cluster:beta")));
        };
        Ok(Planted {
            measure: m.parse()?,
            cluster: c.parse().map_err(|_| Error::Config(format!("bad cluster id `{c}`")))?,
            beta: b.parse().map_err(|_| Error::Config(format!("bad coefficient `{b}`")))?,
        })
    }
}

impl std::fmt::Display for Planted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.measure, self.cluster, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Sd(f64),
    /// Noise sd chosen so that corr(score, phenotype) is this value in
    /// expectation.
    CeilingR(f64),
}

/// `phenotype = baseline + Σ β·z(feature) + noise`. For sex the same
/// latent value with logistic noise is thresholded at 0 (1 = male).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub target: Target,
    pub baseline: f64,
    pub planted: Vec<Planted>,
    pub noise: Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub subjects: usize,
    /// Clusters generated per subject.
    pub clusters: usize,
    /// Pad every subject to this many clusters with missing ones.
    pub pad_to: Option<usize>,
    /// Make clusters 1 and 2 identical in every subject and extreme in every
    /// measure, so per-subject max-min scaling is the same affine map for
    /// all subjects.
    pub anchors: bool,
    pub points: usize,
    pub jitter: f64,
    pub length_range: (f64, f64),
    pub sigma_range: (f64, f64),
    pub streamline_range: (usize, usize),
    /// Share of clusters with an arc centerline.
    pub arc_fraction: f64,
    pub arc_angle: f64,
    /// Log-scale sd of per-subject variation of length, spread and count.
    pub variation: f64,
    pub fa: f64,
    pub md: f64,
    /// Log-scale sd of per-subject variation of cluster FA and MD.
    pub scalar_variation: f64,
    pub scalar_noise: f64,
    pub targets: Vec<TargetSpec>,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        let p = |measure, cluster, beta| Planted { measure, cluster, beta };
        use MeasureKind::{Diameter, Length};
        CohortSpec {
            subjects: 200,
            clusters: 32,
            pad_to: None,
            anchors: true,
            points: 16,
            jitter: 0.1,
            length_range: (30.0, 120.0),
            sigma_range: (1.0, 4.0),
            streamline_range: (20, 80),
            arc_fraction: 0.5,
            arc_angle: 1.2,
            variation: 0.15,
            fa: 0.45,
            md: 8e-4,
            scalar_variation: 0.05,
            scalar_noise: 0.05,
            targets: vec![
                TargetSpec {
                    target: Target::Sex,
                    baseline: 0.0,
                    planted: vec![p(Length, 7, 1.0), p(Diameter, 8, -1.0)],
                    noise: Noise::Sd(0.5),
                },
                TargetSpec { target: Target::Age, baseline: 28.0, planted: vec![], noise: Noise::Sd(3.0) },
                TargetSpec {
                    target: Target::Tpvt,
                    baseline: 100.0,
                    planted: vec![p(Length, 3, 0.6), p(Length, 4, -0.5), p(Diameter, 5, 0.5)],
                    noise: Noise::CeilingR(0.85),
                },
            ],
            seed: 0,
        }
    }
}

const ANCHORS: u32 = 2;

impl CohortSpec {
    pub fn cluster_count(&self) -> usize {
        self.pad_to.unwrap_or(self.clusters)
    }

    pub fn subject_id(&self, index: usize) -> String {
        format!("sub-{:04}", index + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.subjects < 10 {
            return bad(format!("need at least 10 subjects, got {}", self.subjects));
        }
        if self.clusters == 0 || (self.anchors && self.clusters <= ANCHORS as usize) {
            return bad(format!("{} clusters are too few", self.clusters));
        }
        if self.pad_to.is_some_and(|p| p < self.clusters) {
            return bad(format!("pad_to {:?} is below the {} generated clusters", self.pad_to, self.clusters));
        }
        let (l0, l1) = self.length_range;
        let (s0, s1) = self.sigma_range;
        let (n0, n1) = self.streamline_range;
        if !(l0 > 0.0 && l0 <= l1 && l1.is_finite()) || !(s0 >= 0.0 && s0 <= s1 && s1.is_finite()) || !(n0 >= 1 && n0 <= n1) {
            return bad("length, sigma or streamline range is invalid".into());
        }
        if self.anchors && s0 <= 0.0 {
            return bad("anchors need a positive minimum sigma".into());
        }
        let finite_nonneg = [self.jitter, self.variation, self.scalar_variation, self.scalar_noise, self.md];
        if finite_nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self.points < 2
            || !(0.0..=1.0).contains(&self.arc_fraction)
            || !(0.0..=1.0).contains(&self.fa)
            || !(self.arc_angle > 0.0 && self.arc_angle < 2.0 * PI)
        {
            return bad("bundle settings out of range".into());
        }
        let mut seen = Vec::new();
        for t in &self.targets {
            if seen.contains(&t.target) {
                return bad(format!("target {} configured twice", t.target));
            }
            seen.push(t.target);
            if !t.baseline.is_finite() {
                return bad(format!("{} baseline is not finite", t.target));
            }
            for p in &t.planted {
                let first = if self.anchors { ANCHORS + 1 } else { 1 };
                if p.cluster < first || p.cluster as usize > self.clusters || !p.beta.is_finite() {
                    return bad(format!(
                        "{}: planted term {p} must use a generated non-anchor cluster ({first}..={}) and a finite beta",
                        t.target, self.clusters
                    ));
                }
            }
            match t.noise {
                Noise::Sd(s) if !(s.is_finite() && s >= 0.0) => return bad(format!("{} noise sd {s}", t.target)),
                Noise::CeilingR(r) if !(r > 0.0 && r <= 1.0) => return bad(format!("{} ceiling r {r}", t.target)),
                Noise::CeilingR(_) if t.planted.is_empty() => {
                    return bad(format!("{} has a ceiling r but no planted terms", t.target))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Any `target.*` key
    /// replaces the default target set as a whole.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = FlatConfig::parse(text)?;
        let mut s = CohortSpec { targets: Vec::new(), ..CohortSpec::default() };
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = c.get($key)? {
                    $field = v;
                }
            };
        }
        macro_rules! pair {
            ($field:expr, $key:literal) => {
                if let Some(v) = c.get_list($key)? {
                    let [a, b] = v[..] else {
                        return Err(Error::Config(format!("`{}` needs two values", $key)));
                    };
                    $field = (a, b);
                }
            };
        }
        set!(s.seed, "seed");
        set!(s.subjects, "subjects");
        set!(s.clusters, "clusters");
        s.pad_to = c.get("pad_to")?;
        set!(s.anchors, "anchors");
        set!(s.points, "points");
        set!(s.jitter, "jitter");
        pair!(s.length_range, "length");
        pair!(s.sigma_range, "sigma");
        pair!(s.streamline_range, "streamlines");
        set!(s.arc_fraction, "arc_fraction");
        set!(s.arc_angle, "arc_angle");
        set!(s.variation, "variation");
        set!(s.fa, "fa");
        set!(s.md, "md");
        set!(s.scalar_variation, "scalar_variation");
        set!(s.scalar_noise, "scalar_noise");
        for target in Target::ALL {
            let entries = c.take_prefixed(&format!("target.{target}."));
            if entries.is_empty() {
                continue;
            }
            let mut t = TargetSpec { target, baseline: 0.0, planted: Vec::new(), noise: Noise::Sd(0.0) };
            let mut noise = None;
            for e in entries {
                let field = &e.key[format!("target.{target}.").len()..];
                match field {
                    "baseline" => t.baseline = crate::flatconf::parse_value(&e)?,
                    "planted" => t.planted = parse_list(&e)?,
                    "noise_sd" | "ceiling_r" if noise.is_some() => {
                        return Err(Error::Config(format!("{target}: give either noise_sd or ceiling_r")))
                    }
                    "noise_sd" => noise = Some(Noise::Sd(crate::flatconf::parse_value(&e)?)),
                    "ceiling_r" => noise = Some(Noise::CeilingR(crate::flatconf::parse_value(&e)?)),
                    other => return Err(Error::Config(format!("unknown key `target.{target}.{other}`"))),
                }
            }
            t.noise = noise.unwrap_or(Noise::Sd(0.0));
            s.targets.push(t);
        }
        if s.targets.is_empty() {
            s.targets = CohortSpec::default().targets;
        }
        c.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("seed", self.seed.to_string());
        put("subjects", self.subjects.to_string());
        put("clusters", self.clusters.to_string());
        if let Some(p) = self.pad_to {
            put("pad_to", p.to_string());
        }
        put("anchors", self.anchors.to_string());
        put("points", self.points.to_string());
        put("jitter", self.jitter.to_string());
        put("length", format!("{}, {}", self.length_range.0, self.length_range.1));
        put("sigma", format!("{}, {}", self.sigma_range.0, self.sigma_range.1));
        put("streamlines", format!("{}, {}", self.streamline_range.0, self.streamline_range.1));
        put("arc_fraction", self.arc_fraction.to_string());
        put("arc_angle", self.arc_angle.to_string());
        put("variation", self.variation.to_string());
        put("fa", self.fa.to_string());
        put("md", self.md.to_string());
        put("scalar_variation", self.scalar_variation.to_string());
        put("scalar_noise", self.scalar_noise.to_string());
        let mut targets: Vec<&TargetSpec> = self.targets.iter().collect();
        targets.sort_by_key(|t| t.target);
        for t in targets {
            let key = |f: &str| format!("target.{}.{f}", t.target);
            put(&key("baseline"), t.baseline.to_string());
            put(&key("planted"), t.planted.iter().map(Planted::to_string).collect::<Vec<_>>().join(", "));
            match t.noise {
                Noise::Sd(s) => put(&key("noise_sd"), s.to_string()),
                Noise::CeilingR(r) => put(&key("ceiling_r"), r.to_string()),
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        render(&self.to_pairs())
    }
}

/// Cohort-level parameters of one cluster before per-subject variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBase {
    pub cluster: u32,
    pub length: f64,
    pub sigma: f64,
    pub streamlines: usize,
    pub centerline: Centerline,
    pub anchor: bool,
}

/// Parameters actually used for one subject's cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleParams {
    pub length: f64,
    pub sigma: f64,
    pub streamlines: usize,
    pub fa: f64,
    pub md: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    /// Generated clusters in id order (padding excluded).
    pub bundles: Vec<BundleParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub target: Target,
    pub baseline: f64,
    pub planted: Vec<Planted>,
    /// Cohort mean and sample sd of each planted feature, used for z-scoring.
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
    pub score_sd: f64,
    pub noise_sd: f64,
    /// Realized corr(score, phenotype); for sex, corr(score, label).
    pub realized_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: CohortSpec,
    pub clusters: Vec<ClusterBase>,
    pub subjects: Vec<SubjectTruth>,
    pub targets: Vec<TargetTruth>,
}

fn cluster_bases(spec: &CohortSpec) -> Vec<ClusterBase> {
    let mut r = rng(derive_seed(spec.seed, &[label("clusters")]));
    let (l0, l1) = spec.length_range;
    let (s0, s1) = spec.sigma_range;
    let (n0, n1) = spec.streamline_range;
    (1..=spec.clusters as u32)
        .map(|cluster| {
            let length = r.random_range(l0..=l1);
            let sigma = r.random_range(s0..=s1);
            let streamlines = r.random_range(n0..=n1);
            let arc = r.random::<f64>() < spec.arc_fraction;
            let centerline = if arc { Centerline::Arc { angle: spec.arc_angle } } else { Centerline::Straight };
            match (spec.anchors, cluster) {
                // short, wide, dense, low FA, high MD
                (true, 1) => ClusterBase {
                    cluster,
                    length: 0.5 * l0,
                    sigma: 3.0 * s1,
                    streamlines: 2 * n1,
                    centerline: Centerline::Straight,
                    anchor: true,
                },
                // long, thin, sparse, high FA, low MD
                (true, 2) => ClusterBase {
                    cluster,
                    length: 2.0 * l1,
                    sigma: 0.1 * s0,
                    streamlines: 2,
                    centerline: Centerline::Straight,
                    anchor: true,
                },
                _ => ClusterBase { cluster, length, sigma, streamlines, centerline, anchor: false },
            }
        })
        .collect()
}

fn bundle_for(spec: &CohortSpec, base: &ClusterBase, subject: usize) -> (BundleSpec, BundleParams) {
    let (params, seed) = if base.anchor {
        let (fa, md) = if base.cluster == 1 { (0.5 * spec.fa, 1.5 * spec.md) } else { ((1.5 * spec.fa).min(0.99), 0.5 * spec.md) };
        let p = BundleParams { length: base.length, sigma: base.sigma, streamlines: base.streamlines, fa, md };
        (p, derive_seed(spec.seed, &[label("anchor"), base.cluster as u64]))
    } else {
        let mut r = rng(derive_seed(spec.seed, &[label("subject"), subject as u64, base.cluster as u64]));
        let mut vary = |sd: f64| (sd * normal(&mut r)).exp();
        let length = base.length * vary(spec.variation);
        let sigma = base.sigma * vary(spec.variation);
        let streamlines = ((base.streamlines as f64 * vary(spec.variation)).round() as usize).max(2);
        let fa = (spec.fa * vary(spec.scalar_variation)).min(1.0);
        let md = spec.md * vary(spec.scalar_variation);
        (BundleParams { length, sigma, streamlines, fa, md }, r.random())
    };
    let bundle = BundleSpec {
        length: params.length,
        centerline: base.centerline,
        sigma: params.sigma,
        streamlines: params.streamlines,
        points: spec.points,
        jitter: spec.jitter,
        fa: params.fa,
        md: params.md,
        scalar_noise: spec.scalar_noise,
        seed,
    };
    (bundle, params)
}

/// Streamlines of subject `index`; phenotypes are left empty.
pub fn gen_subject(spec: &CohortSpec, index: usize) -> Result<(SubjectData, SubjectTruth)> {
    gen_subject_with(spec, &cluster_bases(spec), index)
}

fn gen_subject_with(spec: &CohortSpec, bases: &[ClusterBase], index: usize) -> Result<(SubjectData, SubjectTruth)> {
    let mut clusters = Vec::with_capacity(bases.len());
    let mut bundles = Vec::with_capacity(bases.len());
    for base in bases {
        let (bundle, params) = bundle_for(spec, base, index);
        clusters.push(gen_bundle(&bundle, base.cluster)?);
        bundles.push(params);
    }
    let id = spec.subject_id(index);
    let subject = SubjectData::from_clusters(id.clone(), spec.cluster_count(), clusters)?;
    Ok((subject, SubjectTruth { subject_id: id, bundles }))
}

fn subject_features(subject: &SubjectData) -> Result<BTreeMap<MeasureKind, FeatureVector>> {
    let mut f = extract_features(subject)?;
    add_normalized_variants(&mut f)?;
    Ok(f)
}

/// Generates every subject, hands it to `sink`, and keeps only its features.
fn generate(
    spec: &CohortSpec,
    sink: impl Fn(&SubjectData) -> Result<()> + Sync,
) -> Result<(BTreeMap<MeasureKind, FeatureMatrix>, Vec<ClusterBase>, Vec<SubjectTruth>)> {
    spec.validate()?;
    let bases = cluster_bases(spec);
    let rows: Vec<(BTreeMap<MeasureKind, FeatureVector>, SubjectTruth)> = (0..spec.subjects)
        .into_par_iter()
        .map(|i| {
            let (subject, truth) = gen_subject_with(spec, &bases, i)?;
            sink(&subject)?;
            Ok((subject_features(&subject)?, truth))
        })
        .collect::<Result<_>>()?;
    let mut features = BTreeMap::new();
    for kind in MeasureKind::ALL {
        let vectors = rows.iter().map(|(f, t)| (t.subject_id.clone(), f[&kind].clone()));
        features.insert(kind, FeatureMatrix::from_vectors(kind, vectors)?);
    }
    Ok((features, bases, rows.into_iter().map(|(_, t)| t).collect()))
}

fn logistic(r: &mut impl Rng) -> f64 {
    let u: f64 = r.random_range(f64::EPSILON..1.0);
    (u / (1.0 - u)).ln()
}

/// Phenotypes from features by the cohort's planted linear rules.
pub fn plant_phenotypes(
    spec: &CohortSpec,
    features: &BTreeMap<MeasureKind, FeatureMatrix>,
) -> Result<(BTreeMap<String, PhenotypeRecord>, Vec<TargetTruth>)> {
    let ids = &features
        .values()
        .next()
        .ok_or_else(|| Error::InvalidInput("no features".into()))?
        .subject_ids;
    let n = ids.len();
    let mut records: BTreeMap<String, PhenotypeRecord> =
        ids.iter().map(|id| (id.clone(), PhenotypeRecord::default())).collect();
    let mut truths = Vec::new();
    for t in &spec.targets {
        let mut score = vec![0.0; n];
        let (mut means, mut sds) = (Vec::new(), Vec::new());
        for p in &t.planted {
            let m = features
                .get(&p.measure)
                .ok_or_else(|| Error::InvalidInput(format!("no {} features", p.measure)))?;
            let column: Vec<f64> = m.values.column(p.cluster as usize - 1).to_vec();
            let (mean, sd) = (stats::mean(&column), stats::sample_sd(&column));
            if !(sd > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "planted feature {} of cluster {} is constant across subjects",
                    p.measure, p.cluster
                )));
            }
            for (s, x) in score.iter_mut().zip(&column) {
                *s += p.beta * (x - mean) / sd;
            }
            means.push(mean);
            sds.push(sd);
        }
        let score_sd = stats::sample_sd(&score);
        let noise_sd = match t.noise {
            Noise::Sd(s) => s,
            Noise::CeilingR(r) => score_sd * (1.0 / (r * r) - 1.0).sqrt(),
        };
        let mut r = rng(derive_seed(spec.seed, &[label("noise"), label(t.target.name())]));
        let values: Vec<f64> = score
            .iter()
            .map(|s| match t.target {
                // logistic noise with the same sd as the Gaussian case
                Target::Sex => {
                    let latent = t.baseline + s + noise_sd * 3f64.sqrt() / PI * logistic(&mut r);
                    f64::from(u8::from(latent > 0.0))
                }
                _ => t.baseline + s + noise_sd * normal(&mut r),
            })
            .collect();
        for (id, &v) in ids.iter().zip(&values) {
            records.get_mut(id).expect("same ids").set(t.target, Some(v));
        }
        truths.push(TargetTruth {
            target: t.target,
            baseline: t.baseline,
            planted: t.planted.clone(),
            feature_means: means,
            feature_sds: sds,
            score_sd,
            noise_sd,
            realized_r: stats::pearson_r(&score, &values).ok(),
        });
    }
    Ok((records, truths))
}

/// An in-memory cohort: subjects carry their phenotypes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub subjects: Vec<SubjectData>,
    pub truth: GroundTruth,
}

pub fn gen_cohort(spec: &CohortSpec) -> Result<SyntheticCohort> {
    let (features, clusters, subjects_truth) = generate(spec, |_| Ok(()))?;
    let (records, targets) = plant_phenotypes(spec, &features)?;
    let bases = clusters.clone();
    let subjects = (0..spec.subjects)
        .into_par_iter()
        .map(|i| {
            let (mut s, _) = gen_subject_with(spec, &bases, i)?;
            s.phenotypes = records[&s.subject_id];
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(SyntheticCohort {
        subjects,
        truth: GroundTruth { spec: spec.clone(), clusters, subjects: subjects_truth, targets },
    })
}

/// Features and phenotypes of a cohort without keeping any streamlines.
pub fn gen_cohort_features(spec: &CohortSpec) -> Result<(Cohort, GroundTruth)> {
    let (features, clusters, subjects) = generate(spec, |_| Ok(()))?;
    let (phenotypes, targets) = plant_phenotypes(spec, &features)?;
    Ok((Cohort { features, phenotypes }, GroundTruth { spec: spec.clone(), clusters, subjects, targets }))
}

pub const PHENOTYPES_FILE: &str = "phenotypes.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const COHORT_FILE: &str = "cohort.conf";

/// Writes one directory per subject under `dir`, plus the phenotype table,
/// the ground-truth sidecar and the effective cohort config.
pub fn write_cohort(spec: &CohortSpec, dir: &Path) -> Result<GroundTruth> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (features, clusters, subjects) = generate(spec, |s| write_subject(&dir.join(&s.subject_id), s))?;
    let (records, targets) = plant_phenotypes(spec, &features)?;
    let truth = GroundTruth { spec: spec.clone(), clusters, subjects, targets };
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    write(PHENOTYPES_FILE, &write_phenotypes(&records))?;
    write(TRUTH_FILE, (serde_json::to_string_pretty(&truth)? + "\n").as_bytes())?;
    write(COHORT_FILE, spec.to_text().as_bytes())?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{cluster_diameter, cluster_elongation, cluster_mean_length, streamline_midpoint};

    #[test]
    fn degenerate_bundle_has_zero_diameter() {
        let c = gen_bundle(&BundleSpec::new(40.0, 0.0, 30, 1), 1).unwrap();
        let m0 = streamline_midpoint(&c.streamlines()[0]);
        assert!(c.streamlines().iter().all(|s| streamline_midpoint(s) == m0));
        assert_eq!(cluster_diameter(&c), 0.0);
        assert_eq!(cluster_elongation(&c), 0.0);
    }

    #[test]
    fn recovers_length_and_diameter() {
        for centerline in [Centerline::Straight, Centerline::Arc { angle: 1.0 }] {
            let spec = BundleSpec { centerline, ..BundleSpec::new(50.0, 1.5, 500, 3) };
            let c = gen_bundle(&spec, 7).unwrap();
            assert_eq!(c.id(), 7);
            assert!((cluster_mean_length(&c) - 50.0).abs() < 0.02 * 50.0);
            assert!((cluster_diameter(&c) - 3.0).abs() < 0.1 * 3.0);
        }
    }

    #[test]
    fn arc_geometry() {
        let spec = BundleSpec { centerline: Centerline::Arc { angle: PI / 2.0 }, ..BundleSpec::new(10.0, 0.0, 1, 0) };
        let r = 10.0 / (PI / 2.0);
        let end = spec.centerline_at(10.0);
        assert!((end[0] - r).abs() < 1e-12 && (end[1] - r).abs() < 1e-12);
        // offsets are perpendicular to the midpoint tangent
        let [u, w] = spec.midpoint_normals();
        let h = 1e-6;
        let (a, b) = (spec.centerline_at(5.0 - h), spec.centerline_at(5.0 + h));
        let t: Vec<f64> = (0..3).map(|d| b[d] - a[d]).collect();
        assert!((0..3).map(|d| t[d] * u[d]).sum::<f64>().abs() < 1e-9);
        assert!((0..3).map(|d| t[d] * w[d]).sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn bundles_are_deterministic_and_carry_scalars() {
        let spec = BundleSpec { jitter: 0.2, scalar_noise: 0.1, ..BundleSpec::new(20.0, 1.0, 10, 9) };
        let a = gen_bundle(&spec, 1).unwrap();
        assert_eq!(a, gen_bundle(&spec, 1).unwrap());
        assert_ne!(a, gen_bundle(&BundleSpec { seed: 10, ..spec.clone() }, 1).unwrap());
        assert_eq!(a.channel(FA).unwrap().len(), 10);
        assert!(a.channel(FA).unwrap().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert!(gen_bundle(&BundleSpec { points: 1, ..spec.clone() }, 1).is_err());
        assert!(gen_bundle(&BundleSpec { centerline: Centerline::Arc { angle: 7.0 }, ..spec }, 1).is_err());
    }

    fn small() -> CohortSpec {
        CohortSpec { subjects: 12, clusters: 6, streamline_range: (5, 10), points: 6, ..CohortSpec::default() }
            .with_tpvt(vec![Planted { measure: MeasureKind::Length, cluster: 3, beta: 2.0 }], Noise::Sd(0.0))
    }

    impl CohortSpec {
        fn with_tpvt(mut self, planted: Vec<Planted>, noise: Noise) -> Self {
            self.targets = vec![TargetSpec { target: Target::Tpvt, baseline: 10.0, planted, noise }];
            self
        }
    }

    #[test]
    fn noiseless_phenotype_is_exactly_linear() {
        let (cohort, truth) = gen_cohort_features(&small()).unwrap();
        let len: Vec<f64> = cohort.features[&MeasureKind::Length].values.column(2).to_vec();
        let y: Vec<f64> = cohort.features[&MeasureKind::Length]
            .subject_ids
            .iter()
            .map(|id| cohort.phenotypes[id].tpvt.unwrap())
            .collect();
        let t = &truth.targets[0];
        for (x, v) in len.iter().zip(&y) {
            let want = 10.0 + 2.0 * (x - t.feature_means[0]) / t.feature_sds[0];
            assert!((v - want).abs() < 1e-12);
        }
        assert!((t.realized_r.unwrap() - 1.0).abs() < 1e-12);
        assert!(cohort.phenotypes.values().all(|r| r.sex.is_none() && r.age.is_none()));
    }

    #[test]
    fn ceiling_noise_scale() {
        let spec = CohortSpec { subjects: 100, ..small() }
            .with_tpvt(vec![Planted { measure: MeasureKind::Length, cluster: 3, beta: 2.0 }], Noise::CeilingR(0.85));
        let (_, truth) = gen_cohort_features(&spec).unwrap();
        let t = &truth.targets[0];
        assert!((t.noise_sd - t.score_sd * (1.0 / 0.7225f64 - 1.0).sqrt()).abs() < 1e-12);
        assert!((t.realized_r.unwrap() - 0.85).abs() < 0.1);
    }

    #[test]
    fn cohorts_are_deterministic_and_seed_dependent() {
        let a = gen_cohort(&small()).unwrap();
        let b = gen_cohort(&small()).unwrap();
        assert_eq!(a, b);
        let c = gen_cohort(&CohortSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.subjects, c.subjects);
        assert_eq!(a.subjects.len(), 12);
        assert!(a.subjects.iter().all(|s| s.phenotypes.tpvt.is_some()));
        // streaming and in-memory paths agree
        let (cohort, truth) = gen_cohort_features(&small()).unwrap();
        assert_eq!(truth, a.truth);
        let f = subject_features(&a.subjects[3]).unwrap();
        assert_eq!(cohort.features[&MeasureKind::Diameter].values.row(3).to_vec(), f[&MeasureKind::Diameter].values);
    }

    #[test]
    fn anchors_bracket_every_measure() {
        let spec = CohortSpec { subjects: 30, ..CohortSpec::default() };
        let (cohort, _) = gen_cohort_features(&spec).unwrap();
        for kind in MeasureKind::RAW {
            let m = &cohort.features[&kind];
            let rows: Vec<Vec<f64>> = m.values.rows().into_iter().map(|r| r.to_vec()).collect();
            let (lo, hi): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .map(|r| r.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))))
                .unzip();
            assert!(lo.iter().all(|&v| v == lo[0]), "{kind} minimum varies");
            assert!(hi.iter().all(|&v| v == hi[0]), "{kind} maximum varies");
        }
    }

    #[test]
    fn padding_adds_missing_clusters() {
        let spec = CohortSpec { pad_to: Some(20), ..small() };
        let (s, truth) = gen_subject(&spec, 0).unwrap();
        assert_eq!(s.cluster_count(), 20);
        assert_eq!(truth.bundles.len(), 6);
        assert!(s.clusters[6..].iter().all(FiberCluster::is_missing));
        let f = subject_features(&s).unwrap();
        assert!(f[&MeasureKind::LengthN].values[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = "seed = 5\nsubjects = 50\nclusters = 10\npad_to = 1516\nlength = 20, 60\n\
                    target.tpvt.baseline = 100\ntarget.tpvt.planted = Length:3:0.5, Diameter:4:-0.2\n\
                    target.tpvt.ceiling_r = 0.8\ntarget.sex.planted = NoS:5:1\ntarget.sex.noise_sd = 0.3\n";
        let s = CohortSpec::from_text(text).unwrap();
        assert_eq!(s.pad_to, Some(1516));
        assert_eq!(s.length_range, (20.0, 60.0));
        assert_eq!(s.targets.len(), 2);
        assert_eq!(s.targets[1].planted[1], Planted { measure: MeasureKind::Diameter, cluster: 4, beta: -0.2 });
        assert_eq!(CohortSpec::from_text(&s.to_text()).unwrap(), s);
        assert_eq!(CohortSpec::from_text(&CohortSpec::default().to_text()).unwrap(), CohortSpec::default());
        assert_eq!(CohortSpec::from_text("seed = 3\n").unwrap().targets, CohortSpec::default().targets);
        for bad in [
            "subjects = 5\n",
            "target.tpvt.planted = Length:1:0.5\n",
            "target.tpvt.planted = Length:99:0.5\n",
            "target.tpvt.planted = Length:3\n",
            "target.tpvt.noise_sd = 1\ntarget.tpvt.ceiling_r = 0.5\n",
            "target.tpvt.ceiling_r = 0.5\n",
            "target.tpvt.color = 1\n",
            "pad_to = 4\n",
            "length = 1\n",
            "nonsense = 1\n",
        ] {
            assert!(CohortSpec::from_text(bad).is_err(), "accepted {bad}");
        }
    }
}
