//! Experiment configuration: one JSON document per run, schema-checked
//! with unknown fields rejected. Every defaulted field is materialized
//! on deserialization, so the config echoed into a report records the
//! full effective setting.

use std::path::Path;

use equisep::optim::{OptimConfig, OptimKind, ADAM_LR_GRID, SGD_LR_GRID};
use equisep::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub optimizer: OptimizerConfig,
    /// Epochs at which a training-set probe is stored; 0 = before training.
    #[serde(default)]
    pub snapshot_epochs: Vec<usize>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// One of "mnist", "fashion-mnist", "cifar10".
    pub name: String,
    /// Directory holding the canonical dataset files.
    pub data_dir: String,
    /// Target (height, width); omitted keeps the native size.
    #[serde(default)]
    pub resize: Option<(usize, usize)>,
    /// Color channel for CIFAR-10 (0 = red, 1 = green, 2 = blue).
    #[serde(default)]
    pub channel: usize,
    /// Balanced training draw: examples per class.
    #[serde(default)]
    pub train_per_class: Option<usize>,
    /// Imbalanced training draw: one count per class. Exactly one of
    /// this and `train_per_class` must be set.
    #[serde(default)]
    pub train_per_class_counts: Option<Vec<usize>>,
    /// Balanced test draw; omitted disables test-split probing.
    #[serde(default)]
    pub test_per_class: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_true")]
    pub batchnorm: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// One of "sgd", "momentum", "adam".
    pub kind: String,
    /// Fixed learning rate; omitted means sweep.
    #[serde(default)]
    pub lr: Option<f64>,
    /// Explicit sweep grid; omitted with no `lr` uses the protocol grid
    /// for the optimizer kind.
    #[serde(default)]
    pub sweep_grid: Option<Vec<f64>>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub classwise: bool,
    #[serde(default)]
    pub pca: bool,
    /// Capture-point indices for block-grouped analysis; empty keeps
    /// the per-layer view only.
    #[serde(default)]
    pub block_boundaries: Vec<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            classwise: false,
            pca: false,
            block_boundaries: Vec::new(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_epochs() -> usize {
    600
}

fn default_batch_size() -> usize {
    128
}

fn default_momentum() -> f64 {
    0.9
}

fn default_weight_decay() -> f64 {
    5e-4
}

fn default_rel_tol() -> f64 {
    equisep::separation::DEFAULT_REL_TOL
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset.name.as_str() {
            "mnist" | "fashion-mnist" | "cifar10" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown dataset \"{other}\" (expected mnist, fashion-mnist, or cifar10)"
                )))
            }
        }
        if self.dataset.channel > 2 {
            return Err(Error::Config(format!(
                "channel {} out of range 0..=2",
                self.dataset.channel
            )));
        }
        match (
            &self.dataset.train_per_class,
            &self.dataset.train_per_class_counts,
        ) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set train_per_class or train_per_class_counts, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "one of train_per_class or train_per_class_counts is required".into(),
                ))
            }
            _ => {}
        }
        if let Some((h, w)) = self.dataset.resize {
            if h == 0 || w == 0 {
                return Err(Error::Config("resize dimensions must be >= 1".into()));
            }
        }
        if self.network.hidden_widths.is_empty() {
            return Err(Error::Config("hidden_widths must be non-empty".into()));
        }
        self.optim_kind()?;
        if let Some(lr) = self.optimizer.lr {
            if !(lr > 0.0) {
                return Err(Error::Config(format!("lr {lr} must be > 0")));
            }
        }
        if self.optimizer.lr.is_some() && self.optimizer.sweep_grid.is_some() {
            return Err(Error::Config("set lr or sweep_grid, not both".into()));
        }
        if self.snapshot_epochs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("snapshot_epochs must be sorted".into()));
        }
        if !(self.analysis.rel_tol > 0.0 && self.analysis.rel_tol < 1.0) {
            return Err(Error::Config(format!(
                "rel_tol {} must be in (0, 1)",
                self.analysis.rel_tol
            )));
        }
        self.optim_config(self.optimizer.lr.unwrap_or(1.0))?.validate()
    }

    pub fn optim_kind(&self) -> Result<OptimKind> {
        match self.optimizer.kind.as_str() {
            "sgd" => Ok(OptimKind::Sgd),
            "momentum" => Ok(OptimKind::Momentum),
            "adam" => Ok(OptimKind::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer \"{other}\" (expected sgd, momentum, or adam)"
            ))),
        }
    }

    /// Core-crate optimizer config with the given learning rate.
    pub fn optim_config(&self, lr: f64) -> Result<OptimConfig> {
        let mut config = OptimConfig::new(self.optim_kind()?, lr, self.seed);
        config.epochs = self.optimizer.epochs;
        config.batch_size = self.optimizer.batch_size;
        config.momentum = self.optimizer.momentum;
        config.weight_decay = self.optimizer.weight_decay;
        Ok(config)
    }

    /// Sweep grid in effect: explicit grid, or the protocol default for
    /// the optimizer kind. None when a fixed lr is set.
    pub fn sweep_grid(&self) -> Result<Option<Vec<f64>>> {
        if self.optimizer.lr.is_some() {
            return Ok(None);
        }
        if let Some(grid) = &self.optimizer.sweep_grid {
            if grid.is_empty() {
                return Err(Error::Config("sweep_grid must be non-empty".into()));
            }
            return Ok(Some(grid.clone()));
        }
        Ok(Some(match self.optim_kind()? {
            OptimKind::Sgd | OptimKind::Momentum => SGD_LR_GRID.to_vec(),
            OptimKind::Adam => ADAM_LR_GRID.to_vec(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "dataset": {
                "name": "fashion-mnist",
                "data_dir": "data/fashion-mnist",
                "resize": [10, 10],
                "train_per_class": 100
            },
            "network": { "hidden_widths": [100, 100, 100, 100, 100, 100, 100] },
            "optimizer": { "kind": "adam" },
            "seed": 1
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_fills_protocol_defaults() {
        let config = ExperimentConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(config.optimizer.epochs, 600);
        assert_eq!(config.optimizer.batch_size, 128);
        assert_eq!(config.optimizer.momentum, 0.9);
        assert_eq!(config.optimizer.weight_decay, 5e-4);
        assert!(config.network.batchnorm);
        assert_eq!(config.analysis.rel_tol, 1e-10);
        assert_eq!(config.sweep_grid().unwrap().unwrap(), ADAM_LR_GRID.to_vec());
    }

    #[test]
    fn unknown_fields_are_rejected_before_compute() {
        let with_extra = minimal_json().replace("\"seed\": 1", "\"seed\": 1, \"typo\": 2");
        assert!(ExperimentConfig::from_json(&with_extra).is_err());
        let nested = minimal_json().replace("\"kind\": \"adam\"", "\"kind\": \"adam\", \"x\": 0");
        assert!(ExperimentConfig::from_json(&nested).is_err());
    }

    #[test]
    fn validation_rejects_inconsistent_settings() {
        let both_lr = minimal_json().replace(
            "\"kind\": \"adam\"",
            "\"kind\": \"adam\", \"lr\": 0.001, \"sweep_grid\": [0.01]",
        );
        assert!(ExperimentConfig::from_json(&both_lr).is_err());
        let bad_dataset = minimal_json().replace("fashion-mnist", "imagenet");
        assert!(ExperimentConfig::from_json(&bad_dataset).is_err());
        let bad_kind = minimal_json().replace("\"kind\": \"adam\"", "\"kind\": \"adagrad\"");
        assert!(ExperimentConfig::from_json(&bad_kind).is_err());
        let both_sampling = minimal_json().replace(
            "\"train_per_class\": 100",
            "\"train_per_class\": 100, \"train_per_class_counts\": [1,1,1,1,1,1,1,1,1,1]",
        );
        assert!(ExperimentConfig::from_json(&both_sampling).is_err());
    }

    #[test]
    fn fixed_lr_disables_the_sweep() {
        let fixed = minimal_json().replace("\"kind\": \"adam\"", "\"kind\": \"adam\", \"lr\": 3e-4");
        let config = ExperimentConfig::from_json(&fixed).unwrap();
        assert!(config.sweep_grid().unwrap().is_none());
        let optim = config.optim_config(3e-4).unwrap();
        assert_eq!(optim.base_lr, 3e-4);
        assert_eq!(optim.kind, OptimKind::Adam);
    }

    #[test]
    fn sgd_kinds_use_the_sgd_grid() {
        for kind in ["sgd", "momentum"] {
            let json = minimal_json().replace("adam", kind);
            let config = ExperimentConfig::from_json(&json).unwrap();
            assert_eq!(config.sweep_grid().unwrap().unwrap(), SGD_LR_GRID.to_vec());
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let text = serde_json::to_string(&config).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, config);
    }
}
