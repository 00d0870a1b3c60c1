//! Experiment configuration file (JSON).
//!
//! ```json
//! {
//!   "dataset": {"kind": "blobs", "num_classes": 3, "samples_per_class": 100, "dims": 2, "spread": 1.0, "seed": 7},
//!   "split": {"test_fraction": 0.25, "seed": 11},
//!   "model": {"input_dim": 2, "hidden_layers": [16], "output_dim": 3},
//!   "train": {"epochs": 30, "batch_size": 16, "learning_rate": 0.05, "shuffle_seed": 1},
//!   "pool": [{"factor": "F1", "levels": [0.0, 0.003, 0.05]}],
//!   "engine": "ea",
//!   "engines": {"ea": {"population_size": 8}},
//!   "budget": {"max_evaluations": 60},
//!   "master_seed": 2024
//! }
//! ```
//!
//! Unknown keys are rejected at every level. Relative CSV paths resolve
//! against the directory of the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use variance_forge_core::data::{gen_blobs_separated, gen_rings, load_csv, split, Dataset, SplitDataset};
use variance_forge_core::metrics::EvalContext;
use variance_forge_core::net::{ModelConfig, TrainConfig};
use variance_forge_core::perturb::{FactorKind, PerturbationPool};
use variance_forge_core::search::{EngineKind, EngineSettings, SearchBudget};
use variance_forge_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        num_classes: usize,
        samples_per_class: usize,
        dims: usize,
        spread: f64,
        /// Defaults to `4 × spread`.
        #[serde(default)]
        center_distance: Option<f64>,
        seed: u64,
    },
    Rings {
        num_rings: usize,
        samples_per_ring: usize,
        noise: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
    },
}

impl DatasetSpec {
    pub fn load(&self, base_dir: &Path) -> Result<Dataset> {
        match self {
            DatasetSpec::Blobs {
                num_classes,
                samples_per_class,
                dims,
                spread,
                center_distance,
                seed,
            } => gen_blobs_separated(
                *num_classes,
                *samples_per_class,
                *dims,
                *spread,
                center_distance.unwrap_or(4.0 * spread),
                *seed,
            ),
            DatasetSpec::Rings {
                num_rings,
                samples_per_ring,
                noise,
                seed,
            } => gen_rings(*num_rings, *samples_per_ring, *noise, *seed),
            DatasetSpec::Csv { path, label_column } => {
                let full = base_dir.join(path);
                // A missing or unreadable dataset is a data problem, not a runtime one.
                load_csv(&full, label_column).map_err(|e| match e {
                    Error::Io { path, source } => Error::Data(format!("cannot read {}: {source}", path.display())),
                    other => other,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub max_evaluations: usize,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// At most four factors; defaults to the whole pool.
    pub factors: Option<Vec<FactorKind>>,
    /// Level index used as "on" per factor; defaults to the last level.
    pub levels: BTreeMap<FactorKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pool: PerturbationPool,
    #[serde(default = "default_engine")]
    pub engine: EngineKind,
    #[serde(default)]
    pub engines: EngineSettings,
    /// Defaults to one evaluation per pool strategy.
    #[serde(default)]
    pub budget: Option<BudgetSpec>,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Evaluation worker threads; `VF_PARALLELISM` takes precedence.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub grid: GridSpec,
    /// Directory of the file this was read from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_engine() -> EngineKind {
    EngineKind::Brute
}

fn default_parallelism() -> usize {
    1
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that need more than one section.
    pub fn validate(&self) -> Result<()> {
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.test_fraction must lie in (0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        self.budget()?;
        self.engines.ea.validate()?;
        self.engines.rl.validate()?;
        self.engines.smbo.validate()?;
        self.engines.sway.validate()?;
        if let Some(f) = &self.grid.factors {
            for kind in f {
                if self.pool.position(*kind).is_none() {
                    return Err(Error::Config(format!("grid factor {kind} is not in the pool")));
                }
            }
        }
        Ok(())
    }

    pub fn budget(&self) -> Result<SearchBudget> {
        match &self.budget {
            Some(b) => SearchBudget::new(b.max_evaluations, b.max_iterations.unwrap_or(usize::MAX)),
            None => SearchBudget::evaluations(usize::try_from(self.pool.size()).unwrap_or(usize::MAX)),
        }
    }

    pub fn split_dataset(&self) -> Result<SplitDataset> {
        split(
            &self.dataset.load(&self.base_dir)?,
            self.split.test_fraction,
            self.split.seed,
        )
    }

    pub fn context(&self) -> Result<EvalContext> {
        EvalContext::new(
            self.split_dataset()?,
            self.model.clone(),
            self.train.clone(),
            self.pool.clone(),
            self.master_seed,
        )
    }
}
