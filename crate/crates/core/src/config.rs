//! Run configuration: one JSON document, unknown keys rejected.
//!
//! ```json
//! {
//!   "space": { "preset": { "name": "tiny", "hidden_dim": 32 } },
//!   "dataset": { "synthetic": { "preset": "blobs-hard" } },
//!   "train": { "steps": 2000 },
//!   "retrain": { "steps": 1500 },
//!   "search": { "iterations": 15, "shift_lr": 0.01 },
//!   "master_seed": 7,
//!   "output_dir": "runs/demo"
//! }
//! ```
//!
//! Every component seed is derived from `master_seed` and a fixed label, so
//! changing one section never perturbs another section's randomness.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_csv, Dataset};
use crate::rng::{derive_seed, sha256_hex};
use crate::search::EAConfig;
use crate::space::{Dims, Preset, SearchSpace};
use crate::supernet::Provenance;
use crate::train::{EvalSpec, TrainConfig};
use crate::transfer::TransferConfig;
use crate::{Error, Result};

pub const SEED_ENV: &str = "SHIFTNAS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSource {
    Preset {
        name: Preset,
        #[serde(default = "default_hidden")]
        hidden_dim: usize,
        #[serde(default)]
        flops_budget: Option<u64>,
    },
    /// Full descriptor; input and class counts are overwritten from the dataset.
    Inline(SearchSpace),
}

fn default_hidden() -> usize {
    Dims::default().hidden_dim
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        preset: String,
        /// Defaults to a seed derived from `master_seed`.
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
    },
}

impl DatasetSource {
    /// Parses a CLI dataset argument: a synthetic preset name or a CSV path.
    pub fn from_arg(arg: &str) -> Self {
        if arg.ends_with(".csv") || Path::new(arg).exists() {
            DatasetSource::Csv { path: arg.into() }
        } else {
            DatasetSource::Synthetic {
                preset: arg.to_string(),
                seed: None,
            }
        }
    }

    pub fn load(&self, master_seed: u64, base_dir: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic { preset, seed } => {
                let seed = seed.unwrap_or_else(|| derive_seed(master_seed, &format!("data/{preset}")));
                generate_synthetic(preset, seed)
            }
            DatasetSource::Csv { path } => {
                let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
                Ok(load_csv(&path, derive_seed(master_seed, "data/split"))?.dataset)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub space: SpaceSource,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub train: TrainConfig,
    /// Settings of the from-scratch oracle.
    #[serde(default)]
    pub retrain: TrainConfig,
    #[serde(default)]
    pub search: EAConfig,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
    /// Evaluation used by `order-audit`.
    #[serde(default = "EvalSpec::full")]
    pub audit_eval: EvalSpec,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    /// Set when `SHIFTNAS_SEED` replaced the file's `master_seed`.
    pub seed_override: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.retrain.validate()?;
        self.search.validate()?;
        if let Some(t) = &self.transfer {
            t.validate()?;
        }
        Ok(())
    }

    /// Reads `path`, applying the `SHIFTNAS_SEED` override when set.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        let seed_override = match std::env::var(SEED_ENV) {
            Ok(v) => {
                let seed = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
                config.master_seed = seed;
                Some(seed)
            }
            Err(_) => None,
        };
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig {
            config,
            base_dir,
            seed_override,
        })
    }

    /// Short hash of the canonical JSON form (after any seed override).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        sha256_hex(&canonical)[..16].to_string()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash(),
            master_seed: self.master_seed,
        }
    }

    pub fn seed(&self, label: &str) -> u64 {
        derive_seed(self.master_seed, label)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed("train"),
            ..self.train.clone()
        }
    }

    pub fn retrain_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed("retrain"),
            ..self.retrain.clone()
        }
    }

    pub fn search_config(&self) -> EAConfig {
        EAConfig {
            seed: self.seed("search"),
            ..self.search.clone()
        }
    }

    pub fn transfer_config(&self) -> TransferConfig {
        let mut t = self.transfer.clone().unwrap_or_default();
        t.ea.seed = self.seed("transfer/search");
        t.head_seed = self.seed("transfer/head");
        t
    }

    pub fn supernet_seed(&self) -> u64 {
        self.seed("supernet/init")
    }

    /// The search space sized for `dataset`.
    pub fn build_space(&self, dataset: &Dataset) -> Result<SearchSpace> {
        let space = match &self.space {
            SpaceSource::Preset {
                name,
                hidden_dim,
                flops_budget,
            } => SearchSpace::preset(
                *name,
                Dims {
                    input_dim: dataset.input_dim(),
                    hidden_dim: *hidden_dim,
                    num_classes: dataset.num_classes(),
                },
            )
            .with_budget(*flops_budget),
            SpaceSource::Inline(s) => s.with_io(dataset.input_dim(), dataset.num_classes()),
        };
        space.validate()?;
        Ok(space)
    }
}

impl LoadedConfig {
    pub fn dataset(&self) -> Result<Dataset> {
        self.config.dataset.load(self.config.master_seed, &self.base_dir)
    }

    /// `output_dir`, resolved against the config's directory when relative.
    pub fn run_dir(&self) -> PathBuf {
        if self.config.output_dir.is_relative() {
            self.base_dir.join(&self.config.output_dir)
        } else {
            self.config.output_dir.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "space": { "preset": { "name": "tiny" } },
        "dataset": { "synthetic": { "preset": "rings" } },
        "output_dir": "out"
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.search, EAConfig::default());
        assert_eq!(cfg.train.steps, 5000);
        assert!(cfg.transfer.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("\"output_dir\"", "\"outptu_dir\": 1, \"output_dir\"");
        assert!(RunConfig::from_json(&bad).is_err());
        let nested = MINIMAL.replace("\"name\": \"tiny\"", "\"name\": \"tiny\", \"blocks\": 3");
        assert!(RunConfig::from_json(&nested).is_err());
        let in_search = MINIMAL.replace("\"output_dir\"", "\"search\": {\"iters\": 3}, \"output_dir\"");
        assert!(RunConfig::from_json(&in_search).is_err());
    }

    #[test]
    fn sub_seeds_are_independent_of_other_sections() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.search.iterations = 3;
        assert_eq!(a.train_config().seed, b.train_config().seed);
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.train_config().seed, a.search_config().seed);
    }

    #[test]
    fn space_takes_io_from_dataset() {
        let loaded = LoadedConfig {
            config: RunConfig::from_json(MINIMAL).unwrap(),
            base_dir: PathBuf::new(),
            seed_override: None,
        };
        let data = loaded.dataset().unwrap();
        let space = loaded.config.build_space(&data).unwrap();
        assert_eq!(space.num_classes, 3);
        assert_eq!(space.input_dim, 16);
    }
}
