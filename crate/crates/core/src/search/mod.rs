//! Search engines that look for the strategy with the largest performance
//! variance (pv).
//!
//! Every engine drives a [`Session`] over a shared [`Evaluator`]. The session
//! charges the budget once per distinct strategy; asking again for a strategy
//! already evaluated in the same run is free, whether or not the evaluator's
//! cache was warm beforehand. Results therefore never depend on cache state.

mod brute;
mod ea;
mod gp;
mod rl;
mod smbo;
mod sway;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use brute::brute_force;
pub use ea::{search_ea, EaConfig};
pub use gp::{expected_improvement, GaussianProcess};
pub use rl::{q_update, search_rl, train_rl, QLearner, RlConfig, RlState};
pub use smbo::{search_smbo, SmboConfig};
pub use sway::{search_sway, SwayConfig};

use crate::error::{Error, Result};
use crate::metrics::{EvaluationRecord, Evaluator};
use crate::perturb::{PerturbationPool, PerturbationStrategy};

/// Level index `k` of a factor with `L` levels maps to `k / (L − 1)`;
/// single-level factors map to 0.
pub fn encode_real(pool: &PerturbationPool, ps: &PerturbationStrategy) -> Vec<f64> {
    pool.level_counts()
        .iter()
        .zip(ps.indices())
        .map(|(&l, &k)| if l > 1 { k as f64 / (l - 1) as f64 } else { 0.0 })
        .collect()
}

/// Inverse of [`encode_real`]: clamps to `[0, 1]` and rounds to the nearest
/// level, halves rounding up. NaN decodes to level 0.
pub fn decode_real(pool: &PerturbationPool, v: &[f64]) -> Result<PerturbationStrategy> {
    let counts = pool.level_counts();
    if v.len() != counts.len() {
        return Err(Error::shape(format!(
            "embedding has {} coordinates but the pool has {} factors",
            v.len(),
            counts.len()
        )));
    }
    let indices = counts
        .iter()
        .zip(v)
        .map(|(&l, &x)| {
            let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
            ((x * (l - 1) as f64 + 0.5).floor() as usize).min(l - 1)
        })
        .collect();
    Ok(PerturbationStrategy::from_indices(indices))
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBudget {
    pub max_evaluations: usize,
    /// Generations (EA), episodes (RL), acquisition rounds (SMBO) or
    /// splitting rounds (SWAY). Ignored by brute force.
    pub max_iterations: usize,
}

impl SearchBudget {
    pub fn new(max_evaluations: usize, max_iterations: usize) -> Result<Self> {
        let b = SearchBudget {
            max_evaluations,
            max_iterations,
        };
        b.validate()?;
        Ok(b)
    }

    /// Evaluation cap only.
    pub fn evaluations(max_evaluations: usize) -> Result<Self> {
        Self::new(max_evaluations, usize::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_evaluations == 0 || self.max_iterations == 0 {
            return Err(Error::config("search budget bounds must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0-based count of distinct evaluations before this one.
    pub step: usize,
    pub strategy: PerturbationStrategy,
    pub pv: f64,
    pub incumbent_best_pv: f64,
}

/// One entry per distinct strategy evaluated, in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub engine: String,
    pub entries: Vec<TraceEntry>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: EvaluationRecord,
    pub trace: SearchTrace,
    /// Records in evaluation order.
    pub records: Vec<EvaluationRecord>,
}

/// Highest pv first; ties in canonical strategy order.
pub fn rank(records: &mut [EvaluationRecord]) {
    records.sort_by(|a, b| b.pv.total_cmp(&a.pv).then_with(|| a.strategy.cmp(&b.strategy)));
}

impl SearchResult {
    pub fn ranked(&self) -> Vec<EvaluationRecord> {
        let mut r = self.records.clone();
        rank(&mut r);
        r
    }
}

/// Per-run bookkeeping shared by the engines.
pub struct Session<'a> {
    evaluator: &'a Evaluator,
    engine: String,
    max_evaluations: usize,
    seen: HashMap<PerturbationStrategy, usize>,
    records: Vec<EvaluationRecord>,
    entries: Vec<TraceEntry>,
    best: Option<usize>,
}

impl<'a> Session<'a> {
    pub fn new(evaluator: &'a Evaluator, engine: &str, budget: &SearchBudget) -> Result<Self> {
        budget.validate()?;
        Ok(Session {
            evaluator,
            engine: engine.to_string(),
            max_evaluations: budget.max_evaluations,
            seen: HashMap::new(),
            records: Vec::new(),
            entries: Vec::new(),
            best: None,
        })
    }

    pub fn pool(&self) -> &'a PerturbationPool {
        self.evaluator.pool()
    }

    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    pub fn remaining(&self) -> usize {
        self.max_evaluations - self.records.len()
    }

    pub fn get(&self, ps: &PerturbationStrategy) -> Option<&EvaluationRecord> {
        self.seen.get(ps).map(|&i| &self.records[i])
    }

    /// Records in evaluation order.
    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.best.map(|i| &self.records[i])
    }

    /// `None` when `ps` is new and the budget is spent.
    pub fn evaluate(&mut self, ps: &PerturbationStrategy) -> Result<Option<EvaluationRecord>> {
        Ok(self.evaluate_batch(std::slice::from_ref(ps))?.pop().flatten())
    }

    /// Evaluates the new strategies of `batch` together (up to the remaining
    /// budget, first come first served) and answers every entry.
    pub fn evaluate_batch(&mut self, batch: &[PerturbationStrategy]) -> Result<Vec<Option<EvaluationRecord>>> {
        let mut fresh: Vec<PerturbationStrategy> = Vec::new();
        for ps in batch {
            if !self.seen.contains_key(ps) && !fresh.contains(ps) && fresh.len() < self.remaining() {
                self.pool().check(ps)?;
                fresh.push(ps.clone());
            }
        }
        for record in self.evaluator.evaluate_many(&fresh)? {
            self.push(record);
        }
        Ok(batch.iter().map(|ps| self.get(ps).cloned()).collect())
    }

    fn push(&mut self, record: EvaluationRecord) {
        let i = self.records.len();
        // Ties keep the earlier incumbent.
        let incumbent_best_pv = match self.best {
            Some(b) if self.records[b].pv >= record.pv => self.records[b].pv,
            _ => {
                self.best = Some(i);
                record.pv
            }
        };
        self.entries.push(TraceEntry {
            step: i,
            strategy: record.strategy.clone(),
            pv: record.pv,
            incumbent_best_pv,
        });
        self.seen.insert(record.strategy.clone(), i);
        self.records.push(record);
    }

    pub fn finish(self) -> Result<SearchResult> {
        let best = self
            .best()
            .cloned()
            .ok_or_else(|| Error::config(format!("{} evaluated no strategy", self.engine)))?;
        Ok(SearchResult {
            best,
            trace: SearchTrace {
                engine: self.engine,
                evaluations: self.records.len(),
                entries: self.entries,
            },
            records: self.records,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Brute,
    Ea,
    Rl,
    Smbo,
    Sway,
}

impl EngineKind {
    pub const ALL: [EngineKind; 5] = [
        EngineKind::Brute,
        EngineKind::Ea,
        EngineKind::Rl,
        EngineKind::Smbo,
        EngineKind::Sway,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Brute => "brute",
            EngineKind::Ea => "ea",
            EngineKind::Rl => "rl",
            EngineKind::Smbo => "smbo",
            EngineKind::Sway => "sway",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown engine `{s}` (expected brute, ea, rl, smbo or sway)")))
    }
}

/// Per-engine settings; the engine actually run is chosen separately.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSettings {
    pub ea: EaConfig,
    pub rl: RlConfig,
    pub smbo: SmboConfig,
    pub sway: SwayConfig,
}

pub fn run_engine(
    kind: EngineKind,
    evaluator: &Evaluator,
    settings: &EngineSettings,
    budget: &SearchBudget,
) -> Result<SearchResult> {
    match kind {
        EngineKind::Brute => brute_force(evaluator, budget),
        EngineKind::Ea => search_ea(evaluator, &settings.ea, budget),
        EngineKind::Rl => search_rl(evaluator, &settings.rl, budget),
        EngineKind::Smbo => search_smbo(evaluator, &settings.smbo, budget),
        EngineKind::Sway => search_sway(evaluator, &settings.sway, budget),
    }
}
