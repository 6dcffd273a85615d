//! Experiment configuration in the flat `key = value` format.
//!
//! ```text
//! name = shape-added
//! seed = 42                      # required
//! task = tpvt                    # sex | age | tpvt | torrt | tfat
//! model = enet                   # cnn | enet
//! folds = 5
//! category.Microstructure = FA, MD
//! category.Connectivity = NoS
//! category.Shape = Length, Diameter, Elongation
//! normalized = false             # use the -N variant of NoS and shape measures
//! minmax = true                  # per-subject max-min input scaling
//! features = features/           # directory of <measure>.csv
//! phenotypes = phenotypes.csv
//! cnn.epochs = 300               # also channels, kernel, blocks, hidden,
//!                                # learning_rate, batch_size, momentum,
//!                                # standardize_targets, init
//! enet.alpha_grid = 1, 0.5, 0.1  # also l1_ratio, tol, max_iter, inner_folds
//! ```
//!
//! Categories keep their file order. Relative paths are left as written.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ModelKind, ModelOptions};
use crate::error::{Error, Result};
use crate::flatconf::{parse_list, render, FlatConfig};
use crate::measures::{Category, MeasureKind};
use crate::task::TaskSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub measures: Vec<MeasureKind>,
}

impl CategorySpec {
    pub fn new(name: &str, measures: &[MeasureKind]) -> Self {
        CategorySpec { name: name.to_string(), measures: measures.to_vec() }
    }

    /// Microstructure / Connectivity / Shape groups of the given measures,
    /// skipping empty groups.
    pub fn grouped(measures: &[MeasureKind]) -> Vec<CategorySpec> {
        [Category::Microstructure, Category::Connectivity, Category::Shape]
            .into_iter()
            .filter_map(|cat| {
                let members: Vec<MeasureKind> = measures.iter().copied().filter(|m| m.category() == cat).collect();
                (!members.is_empty()).then(|| CategorySpec { name: cat.to_string(), measures: members })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskSpec,
    pub model: ModelOptions,
    pub categories: Vec<CategorySpec>,
    pub folds: usize,
    pub seed: u64,
    pub features: Option<PathBuf>,
    pub phenotypes: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(name: &str, task: TaskSpec, model: ModelKind, categories: Vec<CategorySpec>, seed: u64) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            task,
            model: ModelOptions::new(model),
            categories,
            folds: 5,
            seed,
            features: None,
            phenotypes: None,
        }
    }

    /// Distinct measures in first-use order.
    pub fn measures(&self) -> Vec<MeasureKind> {
        let mut out = Vec::new();
        for c in &self.categories {
            for &m in &c.measures {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.model.validate(self.task)?;
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.categories.is_empty() {
            return Err(Error::Config("no categories configured".into()));
        }
        let mut names = BTreeSet::new();
        for c in &self.categories {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Config(format!("category `{}` defined twice", c.name)));
            }
            if c.measures.is_empty() {
                return Err(Error::Config(format!("category `{}` has no measures", c.name)));
            }
            let distinct: BTreeSet<_> = c.measures.iter().collect();
            if distinct.len() != c.measures.len() {
                return Err(Error::Config(format!("category `{}` repeats a measure", c.name)));
            }
            let normalized = c.measures.iter().filter(|m| m.is_normalized()).count();
            if normalized != 0 && normalized != c.measures.len() {
                return Err(Error::Config(format!(
                    "category `{}` mixes raw and normalized measures",
                    c.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = FlatConfig::parse(text)?;
        let task: TaskSpec = c.require("task")?;
        let kind: ModelKind = c.require("model")?;
        let seed: u64 = c.require("seed")?;
        let name = c.get::<String>("name")?.unwrap_or_else(|| "experiment".to_string());
        let folds = c.get("folds")?.unwrap_or(5);
        let normalized = c.get("normalized")?.unwrap_or(false);
        let mut categories = Vec::new();
        for e in c.take_prefixed("category.") {
            let mut measures: Vec<MeasureKind> = parse_list(&e)?;
            if normalized {
                measures = measures.into_iter().map(|m| m.normalized().unwrap_or(m)).collect();
            }
            categories.push(CategorySpec { name: e.key["category.".len()..].to_string(), measures });
        }

        let mut model = ModelOptions::new(kind);
        if let Some(v) = c.get("minmax")? {
            model.minmax = v;
        }
        let n = &mut model.cnn;
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = c.get($key)? {
                    $field = v;
                }
            };
        }
        set!(n.channels, "cnn.channels");
        set!(n.kernel, "cnn.kernel");
        set!(n.blocks, "cnn.blocks");
        if let Some(v) = c.get_list("cnn.hidden")? {
            n.hidden = v;
        }
        set!(n.learning_rate, "cnn.learning_rate");
        set!(n.batch_size, "cnn.batch_size");
        set!(n.epochs, "cnn.epochs");
        set!(n.momentum, "cnn.momentum");
        set!(n.standardize_targets, "cnn.standardize_targets");
        set!(n.init, "cnn.init");
        let e = &mut model.enet;
        set!(e.l1_ratio, "enet.l1_ratio");
        set!(e.tol, "enet.tol");
        set!(e.max_iter, "enet.max_iter");
        set!(e.inner_folds, "enet.inner_folds");
        if let Some(v) = c.get_list("enet.alpha_grid")? {
            e.alpha_grid = v;
        }
        let features = c.get::<String>("features")?.map(PathBuf::from);
        let phenotypes = c.get::<String>("phenotypes")?.map(PathBuf::from);
        c.finish()?;

        let config = ExperimentConfig { name, task, model, categories, folds, seed, features, phenotypes };
        config.validate()?;
        Ok(config)
    }

    /// Every effective setting, defaults included, as config entries.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        fn list<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("name", self.name.clone());
        put("seed", self.seed.to_string());
        put("task", self.task.target.to_string());
        put("model", self.model.kind.to_string());
        put("folds", self.folds.to_string());
        for c in &self.categories {
            put(&format!("category.{}", c.name), list(&c.measures));
        }
        put("minmax", self.model.minmax.to_string());
        if let Some(p) = &self.features {
            put("features", p.display().to_string());
        }
        if let Some(p) = &self.phenotypes {
            put("phenotypes", p.display().to_string());
        }
        match self.model.kind {
            ModelKind::Cnn => {
                let n = &self.model.cnn;
                put("cnn.channels", n.channels.to_string());
                put("cnn.kernel", n.kernel.to_string());
                put("cnn.blocks", n.blocks.to_string());
                put("cnn.hidden", list(&n.hidden));
                put("cnn.learning_rate", n.learning_rate.to_string());
                put("cnn.batch_size", n.batch_size.to_string());
                put("cnn.epochs", n.epochs.to_string());
                put("cnn.momentum", n.momentum.to_string());
                put("cnn.standardize_targets", n.standardize_targets.to_string());
                put("cnn.init", n.init.name().to_string());
            }
            ModelKind::Enet => {
                let e = &self.model.enet;
                put("enet.l1_ratio", e.l1_ratio.to_string());
                put("enet.tol", e.tol.to_string());
                put("enet.max_iter", e.max_iter.to_string());
                put("enet.alpha_grid", list(&e.alpha_grid));
                put("enet.inner_folds", e.inner_folds.to_string());
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        render(&self.to_pairs())
    }
}
