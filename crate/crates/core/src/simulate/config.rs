use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::{CommPeriod, LatteParams, Policy};
use crate::data::synthetic::SyntheticSpec;
use crate::data::world::WorldSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Unit-norm embeddings from a dataset, partitioned by domain.
    Benchmark,
    /// Raw ball-mixture samples; ε_post is measured on held-out draws.
    Theory,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleaving {
    /// One sample per client in turn, by client id.
    #[default]
    RoundRobin,
    /// Each client runs its whole stream before the next starts.
    Sequential,
}

/// Where the streams come from. Exactly one source per experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Manifest of an on-disk embedding dataset.
    Dataset(PathBuf),
    /// Benchmark-shaped data generated from the run seed.
    Synthetic(SyntheticSpec),
    /// Theory world sampled on the fly.
    World(WorldSpec),
    /// Pre-drawn theory federation written by `synth`.
    Federation(PathBuf),
}

fn default_one() -> usize {
    1
}

fn default_bytes_per_scalar() -> usize {
    2
}

fn default_eval_size() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub data: DataSource,
    /// Name of a shipped hyperparameter preset; exclusive with `params`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<LatteParams>,
    /// Overrides the communication period of the preset or params.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_period: Option<CommPeriod>,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub interleaving: Interleaving,
    pub seed: u64,
    /// Clients per domain (benchmark mode).
    #[serde(default = "default_one")]
    pub clients_per_domain: usize,
    /// In-distribution clients (theory mode).
    #[serde(default = "default_one")]
    pub n_id: usize,
    /// Out-of-distribution clients (theory mode).
    #[serde(default)]
    pub n_ood: usize,
    /// Stream length per client. Required in theory mode; in benchmark mode
    /// it truncates each shard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_client: Option<usize>,
    /// Held-out samples per in-distribution client (theory mode).
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default = "default_bytes_per_scalar")]
    pub bytes_per_scalar: usize,
    /// Stream permutations to run and pool.
    #[serde(default = "default_one")]
    pub repeats: usize,
    /// Worker threads for round-robin epochs; 0 uses the global pool. Has
    /// no effect on results.
    #[serde(default)]
    pub threads: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        match &mut cfg.data {
            DataSource::Dataset(p) | DataSource::Federation(p) if p.is_relative() => {
                *p = base.join(&*p);
            }
            _ => {}
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resolved hyperparameters with the communication override applied.
    pub fn latte_params(&self) -> Result<LatteParams> {
        let mut p = match (&self.preset, &self.params) {
            (Some(name), None) => LatteParams::preset(name)?,
            (None, Some(p)) => *p,
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either `preset` or `params`, not both".into()))
            }
            (None, None) => return Err(Error::Config("missing `preset` or `params`".into())),
        };
        if let Some(c) = self.comm_period {
            p.comm_period = c;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.latte_params()?;
        let source_mode = match self.data {
            DataSource::Dataset(_) | DataSource::Synthetic(_) => Mode::Benchmark,
            DataSource::World(_) | DataSource::Federation(_) => Mode::Theory,
        };
        if source_mode != self.mode {
            return Err(Error::Config(format!(
                "{:?} mode cannot read this data source",
                self.mode
            )));
        }
        let bad = |what: &str| Err(Error::Config(format!("{what} must be at least 1")));
        if self.clients_per_domain == 0 {
            return bad("clients_per_domain");
        }
        if self.repeats == 0 {
            return bad("repeats");
        }
        if !matches!(self.bytes_per_scalar, 1 | 2 | 4 | 8) {
            return Err(Error::Config(format!(
                "bytes_per_scalar = {} (expected 1, 2, 4 or 8)",
                self.bytes_per_scalar
            )));
        }
        if self.samples_per_client == Some(0) {
            return bad("samples_per_client");
        }
        if let DataSource::World(_) = self.data {
            if self.n_id == 0 {
                return bad("n_id");
            }
            if self.samples_per_client.is_none() {
                return Err(Error::Config("theory mode needs samples_per_client".into()));
            }
        }
        if self.mode == Mode::Theory && self.eval_size == 0 {
            return bad("eval_size");
        }
        Ok(())
    }
}
