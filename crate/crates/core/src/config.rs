//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 1
//! out = "runs/receipt"
//!
//! [model]
//! kind = "span"
//! [model.encoder]
//! hidden_size = 64
//! num_layers = 2
//!
//! [train]
//! epochs = 50
//! batch_size = 8
//! [train.adam]
//! lr = 1e-3
//!
//! [pretrain]
//! epochs = 100
//!
//! [data]
//! train = "data/receipt-train.jsonl"
//! dev = "data/receipt-dev.jsonl"
//! pretrain = ["data/invoice-train.jsonl"]
//!
//! [thresholds]
//! micro = 0.9
//! ```
//!
//! Relative data paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::ModelConfig;
use crate::numerics::AdamConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Datasets for span pre-training.
    pub pretrain: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub micro: Option<f64>,
    #[serde(rename = "macro")]
    pub macro_: Option<f64>,
}

/// Same knobs as [`TrainConfig`], with a longer default schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_steps: Option<usize>,
    pub adam: AdamConfig,
    pub execution: Execution,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        PretrainConfig {
            epochs: 100,
            batch_size: t.batch_size,
            max_steps: None,
            adam: t.adam,
            execution: t.execution,
        }
    }
}

impl PretrainConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            max_steps: self.max_steps,
            adam: self.adam.clone(),
            execution: self.execution,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pretrain: PretrainConfig,
    pub data: DataPaths,
    /// Output directory; the CLI's `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub thresholds: Thresholds,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving relative data paths
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.data.resolve(dir);
            if let Some(out) = cfg.out.as_mut().filter(|o| o.is_relative()) {
                *out = dir.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.pretrain.train_config().validate()?;
        for (name, t) in [("micro", self.thresholds.micro), ("macro", self.thresholds.macro_)] {
            if let Some(v) = t {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("threshold {name} = {v} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

impl DataPaths {
    fn resolve(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [&mut self.train, &mut self.dev, &mut self.test].into_iter().flatten() {
            fix(p);
        }
        self.pretrain.iter_mut().for_each(fix);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    #[test]
    fn defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.train.adam.lr, 5e-5);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.pretrain.epochs, 100);
        assert_eq!(cfg.model.encoder.max_seq_len, 512);
        assert_eq!(cfg.model.max_span_len, 30);
        assert_eq!(cfg.model.max_chain_len, 32);
    }

    #[test]
    fn parses_sections_and_round_trips() {
        let text = r#"
            seed = 3
            [model]
            kind = "seqlabel"
            [model.encoder]
            hidden_size = 32
            num_heads = 2
            [train]
            epochs = 4
            execution = "sequential"
            [train.adam]
            lr = 0.001
            [data]
            train = "a.jsonl"
            pretrain = ["b.jsonl", "/abs/c.jsonl"]
            [thresholds]
            micro = 0.9
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.model.kind, ModelKind::SeqLabel);
        assert_eq!(cfg.model.encoder.hidden_size, 32);
        assert_eq!(cfg.train.execution, Execution::Sequential);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[model.encoder]\nhidden_size = 10\nnum_heads = 4").is_err());
        assert!(RunConfig::from_toml("[thresholds]\nmicro = 2.0").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[train]\nbatch_size = 0").is_err());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[data]\ntrain = \"t.jsonl\"\npretrain = [\"/x/p.jsonl\"]\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.data.train, Some(dir.path().join("t.jsonl")));
        assert_eq!(cfg.data.pretrain, vec![PathBuf::from("/x/p.jsonl")]);
    }
}
