use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::{fingerprint, EvalCache};
use super::{accuracy_from_probs, c_cdd_from_probs, CcddScore};
use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::net::{forward, train, ModelConfig, Parameters, TrainConfig};
use crate::perturb::{perturb, PerturbationPool, PerturbationStrategy};

/// Everything an evaluation depends on. Two evaluators with equal contexts
/// produce equal records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    pub split: SplitDataset,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub pool: PerturbationPool,
    pub master_seed: u64,
}

impl EvalContext {
    pub fn new(
        split: SplitDataset,
        model_config: ModelConfig,
        train_config: TrainConfig,
        pool: PerturbationPool,
        master_seed: u64,
    ) -> Result<Self> {
        model_config.validate()?;
        train_config.validate()?;
        let classes = split.train.num_classes();
        if model_config.input_dim != split.train.dims() {
            return Err(Error::config(format!(
                "model input_dim {} does not match the {} data features",
                model_config.input_dim,
                split.train.dims()
            )));
        }
        if model_config.output_dim != classes {
            return Err(Error::config(format!(
                "model output_dim {} does not match the {classes} data classes",
                model_config.output_dim
            )));
        }
        pool.validate_for(&model_config, classes)?;
        Ok(EvalContext {
            split,
            model_config,
            train_config,
            pool,
            master_seed,
        })
    }
}

/// Outcome of one strategy. A failed evaluation (training diverged or the
/// perturbed model produced non-finite outputs) mirrors the baseline scores,
/// so its `pv` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub strategy: PerturbationStrategy,
    pub baseline_ccdd: CcddScore,
    pub perturbed_ccdd: CcddScore,
    pub pv: f64,
    pub baseline_accuracy: f64,
    pub perturbed_accuracy: f64,
    pub master_seed: u64,
    /// Seconds.
    pub wall_time: f64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl EvaluationRecord {
    /// Copy with the timing field zeroed, for comparisons.
    pub fn without_timing(&self) -> Self {
        EvaluationRecord {
            wall_time: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub model: Parameters,
    pub ccdd: CcddScore,
    pub accuracy: f64,
}

/// Runs the perturb, train, modify, attack and score pipeline for strategies
/// of one context. Safe to share between threads.
#[derive(Debug)]
pub struct Evaluator {
    ctx: EvalContext,
    fingerprint: String,
    baseline: OnceLock<Baseline>,
    cache: Option<EvalCache>,
    parallelism: usize,
    threads: OnceLock<rayon::ThreadPool>,
    computed: AtomicUsize,
}

impl Evaluator {
    /// Evaluator with an in-memory cache.
    pub fn new(ctx: EvalContext) -> Result<Self> {
        let fp = fingerprint(&ctx)?;
        let cache = EvalCache::in_memory(fp.clone());
        Ok(Self::build(ctx, fp, Some(cache)))
    }

    pub fn uncached(ctx: EvalContext) -> Result<Self> {
        let fp = fingerprint(&ctx)?;
        Ok(Self::build(ctx, fp, None))
    }

    /// Evaluator backed by a JSON-lines cache file shared across runs.
    pub fn with_cache_file(ctx: EvalContext, path: impl AsRef<Path>) -> Result<Self> {
        let fp = fingerprint(&ctx)?;
        let cache = EvalCache::open(path, fp.clone())?;
        Ok(Self::build(ctx, fp, Some(cache)))
    }

    fn build(ctx: EvalContext, fingerprint: String, cache: Option<EvalCache>) -> Self {
        Evaluator {
            ctx,
            fingerprint,
            baseline: OnceLock::new(),
            cache,
            parallelism: 1,
            threads: OnceLock::new(),
            computed: AtomicUsize::new(0),
        }
    }

    /// Worker threads used by batch evaluation; 0 is treated as 1.
    pub fn with_parallelism(mut self, threads: usize) -> Self {
        self.parallelism = threads.max(1);
        self.threads = OnceLock::new();
        self
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn context(&self) -> &EvalContext {
        &self.ctx
    }

    pub fn pool(&self) -> &PerturbationPool {
        &self.ctx.pool
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn cache(&self) -> Option<&EvalCache> {
        self.cache.as_ref()
    }

    /// Pipeline runs actually performed (cache misses).
    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    /// Clean model and its scores on the clean test set; computed once.
    pub fn baseline(&self) -> Result<&Baseline> {
        if let Some(b) = self.baseline.get() {
            return Ok(b);
        }
        let b = self.compute_baseline()?;
        Ok(self.baseline.get_or_init(|| b))
    }

    fn compute_baseline(&self) -> Result<Baseline> {
        let s = &self.ctx.split;
        let model = train(
            s.train.features(),
            s.train.labels(),
            &self.ctx.model_config,
            &self.ctx.train_config,
        )?;
        let probs = forward(&model, s.test.features())?;
        Ok(Baseline {
            ccdd: c_cdd_from_probs(&probs, s.test.labels())?,
            accuracy: accuracy_from_probs(&probs, s.test.labels())?,
            model,
        })
    }

    pub fn evaluate(&self, ps: &PerturbationStrategy) -> Result<EvaluationRecord> {
        self.ctx.pool.check(ps)?;
        let encoding = ps.encoding();
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&encoding)) {
            return Ok(hit);
        }
        let record = self.compute(ps)?;
        self.computed.fetch_add(1, Ordering::Relaxed);
        if let Some(c) = &self.cache {
            c.insert(&record)?;
        }
        Ok(record)
    }

    /// Evaluates `strategies` on the worker pool; output order matches input order.
    pub fn evaluate_many(&self, strategies: &[PerturbationStrategy]) -> Result<Vec<EvaluationRecord>> {
        self.baseline()?;
        if self.parallelism == 1 || strategies.len() < 2 {
            return strategies.iter().map(|ps| self.evaluate(ps)).collect();
        }
        let threads = match self.threads.get() {
            Some(t) => t,
            None => {
                let t = rayon::ThreadPoolBuilder::new()
                    .num_threads(self.parallelism)
                    .build()
                    .map_err(|e| Error::config(format!("cannot start worker threads: {e}")))?;
                self.threads.get_or_init(|| t)
            }
        };
        threads.install(|| strategies.par_iter().map(|ps| self.evaluate(ps)).collect())
    }

    /// Every strategy of the pool, in enumeration order.
    pub fn evaluate_pool(&self) -> Result<Vec<EvaluationRecord>> {
        let all: Vec<_> = self.ctx.pool.iter().collect();
        self.evaluate_many(&all)
    }

    fn compute(&self, ps: &PerturbationStrategy) -> Result<EvaluationRecord> {
        let start = Instant::now();
        let base = self.baseline()?;
        let ctx = &self.ctx;
        let s = &ctx.split;
        let bundle = perturb(&ctx.pool, ps, s, &ctx.model_config, &ctx.train_config, ctx.master_seed)?;

        let failed = |reason: String| EvaluationRecord {
            strategy: ps.clone(),
            baseline_ccdd: base.ccdd,
            perturbed_ccdd: base.ccdd,
            pv: 0.0,
            baseline_accuracy: base.accuracy,
            perturbed_accuracy: base.accuracy,
            master_seed: ctx.master_seed,
            wall_time: start.elapsed().as_secs_f64(),
            failed: true,
            failure: Some(reason),
        };

        // Training is deterministic, so unchanged inputs reproduce the baseline model.
        let retrain = bundle.train_y != s.train.labels()
            || bundle.model_config != ctx.model_config
            || bundle.train_config != ctx.train_config;
        let trained = if retrain {
            match train(
                s.train.features(),
                &bundle.train_y,
                &bundle.model_config,
                &bundle.train_config,
            ) {
                Ok(m) => m,
                Err(e @ Error::Divergence { .. }) => return Ok(failed(e.to_string())),
                Err(e) => return Err(e),
            }
        } else {
            base.model.clone()
        };
        let model = bundle.modify_model(&trained)?;
        let x = bundle.attack_inputs(&model, s.test.labels(), s.test.feature_ranges())?;
        let probs = forward(&model, &x)?;
        if !probs.is_finite() {
            return Ok(failed("perturbed model produced non-finite outputs".into()));
        }
        let ccdd = c_cdd_from_probs(&probs, s.test.labels())?;
        Ok(EvaluationRecord {
            strategy: ps.clone(),
            baseline_ccdd: base.ccdd,
            perturbed_ccdd: ccdd,
            pv: (ccdd.value - base.ccdd.value).abs(),
            baseline_accuracy: base.accuracy,
            perturbed_accuracy: accuracy_from_probs(&probs, s.test.labels())?,
            master_seed: ctx.master_seed,
            wall_time: start.elapsed().as_secs_f64(),
            failed: false,
            failure: None,
        })
    }
}
