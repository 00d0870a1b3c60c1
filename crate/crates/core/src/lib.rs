//! Perturbation-strategy search for small classifiers: a from-scratch MLP,
//! the perturbation factors, the C-CDD score and the search engines.

pub mod data;
pub mod error;
pub mod metrics;
pub mod net;
pub mod perturb;
pub mod presets;
pub mod rng;
pub mod search;

pub use data::{Dataset, SplitDataset};
pub use error::{Error, ErrorCategory, Result};
pub use metrics::{CcddScore, EvalContext, EvaluationRecord, Evaluator};
pub use net::{Matrix, ModelConfig, Parameters, TrainConfig};
pub use perturb::{FactorKind, LevelParam, PerturbationPool, PerturbationStrategy};
pub use search::{EngineKind, SearchBudget, SearchResult, SearchTrace, TraceEntry};
