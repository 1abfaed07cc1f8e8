//! Run configuration, read from a TOML file with `[arch]`, `[loss]`,
//! `[train]` and `[data]` sections. Every key is optional.
//!
//! ```toml
//! [arch]
//! k = 20
//! point_widths = [64, 64, 128, 1024]
//! head_widths = [512, 256]
//!
//! [loss]
//! mode = "supervised_comm"   # nn_only | nn_plus_sym_nn | supervised_comm | unsupervised_comm
//! tau = 0.3
//! # gamma = 1.0             # default: 1.0, or 0.2 for unsupervised_comm
//! comm_norm = "squared_frobenius"
//!
//! [train]
//! sample_count = 3000
//! batch_pairs = 8
//! lr = 1e-4
//! epochs = 100
//! # max_steps = 2000
//! seed = 0
//! checkpoint_every = 0      # 0 writes only the final checkpoint
//! threads = 0               # 0 uses every core
//!
//! [data]
//! # index = "data/index.toml"
//! flip_axis = "x"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::geom::Axis;
use crate::losses::LossConfig;
use crate::model::ArchConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub sample_count: usize,
    pub batch_pairs: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// Stops early after this many optimizer steps.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub threads: usize,
    /// Forces a single worker thread.
    pub deterministic: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            sample_count: 3000,
            batch_pairs: 8,
            lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 100,
            max_steps: None,
            seed: 0,
            checkpoint_every: 0,
            threads: 0,
            deterministic: false,
        }
    }
}

impl TrainSettings {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub index: Option<PathBuf>,
    pub flip_axis: Axis,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            index: None,
            flip_axis: Axis::X,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub loss: LossConfig,
    pub train: TrainSettings,
    pub data: DataConfig,
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.loss.validate()?;
        let t = &self.train;
        if t.sample_count == 0 || t.batch_pairs == 0 {
            return Err(Error::Config("sample_count and batch_pairs must be positive".into()));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(t.lr) || !positive(t.adam_eps) {
            return Err(Error::Config("lr and adam_eps must be positive".into()));
        }
        for b in [t.adam_beta1, t.adam_beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("Adam betas must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}
