//! The standard blobs instance: 3 classes × 100 samples in two dimensions,
//! one hidden layer of 16 units, and the 27-strategy pool over FGSM
//! strength, label-flip rate and weight-noise scale.

use serde_json::json;

use crate::data::{gen_blobs, split, SplitDataset};
use crate::error::Result;
use crate::metrics::EvalContext;
use crate::net::{Activation, InitScheme, ModelConfig, TrainConfig};
use crate::perturb::PerturbationPool;

pub const DATA_SEED: u64 = 7;
pub const SPLIT_SEED: u64 = 11;
pub const MASTER_SEED: u64 = 2024;
pub const TEST_FRACTION: f64 = 0.25;
pub const SPREAD: f64 = 1.0;

pub fn standard_split() -> Result<SplitDataset> {
    split(&gen_blobs(3, 100, 2, SPREAD, DATA_SEED)?, TEST_FRACTION, SPLIT_SEED)
}

pub fn standard_model_config() -> ModelConfig {
    ModelConfig::new(2, vec![16], 3)
        .expect("valid architecture")
        .with_activation(Activation::Relu)
        .with_init(InitScheme::Kaiming, 1)
}

pub fn standard_train_config() -> TrainConfig {
    TrainConfig::new(30, 16, 0.05, 1).expect("valid training config")
}

/// F1 σ ∈ {0, 0.003, 0.05} × F3 rate ∈ {0, 0.1, 0.2} × F5 scale ∈ {0, 0.25, 0.5}.
pub fn standard_pool() -> PerturbationPool {
    serde_json::from_value(json!([
        {"factor": "F1", "levels": [0.0, 0.003, 0.05]},
        {"factor": "F3", "levels": [0.0, 0.1, 0.2]},
        {"factor": "F5", "levels": [0.0, 0.25, 0.5]},
    ]))
    .expect("valid pool")
}

pub fn standard_context() -> Result<EvalContext> {
    EvalContext::new(
        standard_split()?,
        standard_model_config(),
        standard_train_config(),
        standard_pool(),
        MASTER_SEED,
    )
}
