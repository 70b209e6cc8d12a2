use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, Task};
use crate::net::MdsConfig;
use crate::synth::{gen_multi_delay_task, SynthSpec};
use crate::train::TrainConfig;

/// How a configuration is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Leave-one-speaker-out cross-validation over all recordings.
    #[default]
    Loso,
    /// Train on the train partition, select on dev, score on test (or dev
    /// when there is no test partition).
    Holdout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delay,
    Bandwidth,
    Clusters,
    MaxDelay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

/// A base architecture plus optional alternatives for the trunk width and
/// kernel length. Every combination is one hyperparameter candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGrid {
    pub base: MdsConfig,
    #[serde(default)]
    pub trunk_filters: Vec<usize>,
    #[serde(default)]
    pub trunk_kernel_len: Vec<usize>,
}

impl ModelGrid {
    pub fn single(base: MdsConfig) -> Self {
        Self {
            base,
            trunk_filters: Vec::new(),
            trunk_kernel_len: Vec::new(),
        }
    }

    /// Candidates in row-major order (filters outer, kernel length inner).
    pub fn expand(&self) -> Vec<MdsConfig> {
        let filters = if self.trunk_filters.is_empty() {
            vec![self.base.trunk_filters]
        } else {
            self.trunk_filters.clone()
        };
        let kernels = if self.trunk_kernel_len.is_empty() {
            vec![self.base.trunk_kernel_len]
        } else {
            self.trunk_kernel_len.clone()
        };
        let mut out = Vec::with_capacity(filters.len() * kernels.len());
        for &f in &filters {
            for &k in &kernels {
                out.push(MdsConfig {
                    trunk_filters: f,
                    trunk_kernel_len: k,
                    ..self.base.clone()
                });
            }
        }
        out
    }
}

/// One experiment, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Directory written by [`Dataset::save`].
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Generate a synthetic dataset instead of loading one.
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    pub model: ModelGrid,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Independent training repeats per sweep point, with seeds
    /// `train.seed + r`.
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        match (&self.dataset, &self.synth) {
            (Some(_), Some(_)) => return bad("set exactly one of `dataset` and `synth`, not both"),
            (None, None) => return bad("one of `dataset` or `synth` is required"),
            (None, Some(s)) => s.validate()?,
            _ => {}
        }
        if self.model.trunk_filters.contains(&0) || self.model.trunk_kernel_len.contains(&0) {
            return bad("model grid entries must be >= 1");
        }
        for c in self.model.expand() {
            c.validate()?;
        }
        self.train.validate()?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::EmptyGrid);
            }
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1");
        }
        Ok(())
    }

    /// Overrides the training seed and, for synthetic data, the data seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        if let Some(s) = &mut self.synth {
            s.seed = seed;
        }
    }

    /// Loads or generates the dataset and checks it against the model.
    pub fn dataset(&self) -> Result<Dataset> {
        let ds = match (&self.dataset, &self.synth) {
            (Some(dir), None) => Dataset::load(dir)?,
            (None, Some(spec)) => gen_multi_delay_task(spec)?,
            _ => return Err(Error::InvalidConfig("exactly one dataset source is required".into())),
        };
        let base = &self.model.base;
        if ds.input_dim() != base.input_dim {
            return Err(Error::InvalidConfig(format!(
                "model input_dim {} does not match the dataset's {} feature dimensions",
                base.input_dim,
                ds.input_dim()
            )));
        }
        if ds.fs() != base.fs {
            return Err(Error::InvalidConfig(format!(
                "model fs {} Hz does not match the dataset's {} Hz",
                base.fs,
                ds.fs()
            )));
        }
        Ok(ds)
    }
}
