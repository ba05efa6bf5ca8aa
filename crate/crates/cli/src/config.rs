use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcd_core::{Mapper, TrainConfig};
use serde::{Deserialize, Serialize};

/// Where the clouds come from. Synthetic shapes unless `off_dir` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub points: usize,
    /// ModelNet-style tree: `<off_dir>/<class>/{train,test}/*.off`.
    pub off_dir: Option<PathBuf>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            per_class_train: 100,
            per_class_test: 20,
            points: 1024,
            off_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub pipeline: String,
    /// Full mapper config; defaults to the pipeline's standard settings.
    pub mapper: Option<Mapper>,
    pub train: TrainConfig,
    pub epsilon: f64,
    pub attack_steps: usize,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            pipeline: "graphdraw".into(),
            mapper: None,
            train: TrainConfig::default(),
            epsilon: 0.1,
            attack_steps: 1,
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub pipeline: Option<String>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(p) = &o.pipeline {
            if cfg.mapper.as_ref().is_some_and(|m| m.name() != p) {
                cfg.mapper = None;
            }
            cfg.pipeline = p.clone();
        }
        if let Some(e) = o.epochs {
            cfg.train.epochs = e;
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(e) = o.epsilon {
            cfg.epsilon = e;
        }
        if let Some(d) = &o.out {
            cfg.out = d.clone();
        }
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn mapper(&self) -> Result<Mapper> {
        let m = match &self.mapper {
            Some(m) => m.clone(),
            None => Mapper::from_name(&self.pipeline)?,
        };
        if m.name() != self.pipeline {
            bail!("mapper kind `{}` does not match pipeline `{}`", m.name(), self.pipeline);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.mapper()?;
        let d = &self.dataset;
        if d.points == 0 || d.per_class_train == 0 || d.per_class_test == 0 {
            bail!("dataset sizes must be positive");
        }
        if let Some(dir) = &d.off_dir {
            if !dir.is_dir() {
                bail!("OFF directory {} does not exist", dir.display());
            }
        }
        if self.train.batch_size == 0 || self.train.input_side < pcd_core::net::MIN_INPUT_SIDE {
            bail!(
                "batch_size must be positive and input_side at least {}",
                pcd_core::net::MIN_INPUT_SIDE
            );
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be a finite non-negative number");
        }
        if self.attack_steps == 0 {
            bail!("attack_steps must be at least 1");
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.out.join("dataset")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(&self.pipeline)
    }

    /// Seeds for the train and test manifests; far apart so they never share
    /// a cloud.
    pub fn split_seeds(&self) -> (u64, u64) {
        (self.seed << 20, (self.seed << 20) ^ (1 << 40))
    }
}
