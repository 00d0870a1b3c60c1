use serde::{Deserialize, Serialize};

use super::gp::{expected_improvement, GaussianProcess};
use super::{encode_real, SearchBudget, SearchResult, Session};
use crate::error::{Error, Result};
use crate::metrics::Evaluator;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmboConfig {
    pub initial_samples: usize,
    pub iterations: usize,
    /// Kernel length scale over the real embedding.
    pub length_scale: f64,
    /// Observation noise variance (standardized units).
    pub noise: f64,
    /// Exploration margin of expected improvement (standardized units of pv).
    pub xi: f64,
    pub seed: u64,
}

impl Default for SmboConfig {
    fn default() -> Self {
        SmboConfig {
            initial_samples: 5,
            iterations: 10,
            length_scale: 0.5,
            noise: 0.0,
            xi: 0.01,
            seed: 0,
        }
    }
}

impl SmboConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_samples < 2 {
            return Err(Error::config("SMBO initial_samples must be >= 2"));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::config("SMBO length_scale must be finite and > 0"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::config("SMBO noise and xi must be finite and >= 0"));
        }
        Ok(())
    }
}

/// GP-surrogate search: random seeding, then one expected-improvement
/// maximizer per round among the strategies not yet evaluated.
pub fn search_smbo(evaluator: &Evaluator, config: &SmboConfig, budget: &SearchBudget) -> Result<SearchResult> {
    config.validate()?;
    if config.initial_samples >= budget.max_evaluations {
        return Err(Error::config(format!(
            "SMBO initial_samples {} must be below the evaluation budget {}",
            config.initial_samples, budget.max_evaluations
        )));
    }
    let pool = evaluator.pool();
    let mut session = Session::new(evaluator, "smbo", budget)?;
    let mut rng = Rng::new(config.seed);
    let size = pool.size() as usize;
    let seeds: Vec<_> = rng
        .sample_indices(size, config.initial_samples.min(size))
        .into_iter()
        .map(|i| pool.strategy_at(i as u64))
        .collect();
    session.evaluate_batch(&seeds)?;

    for _ in 0..config.iterations.min(budget.max_iterations) {
        let candidates: Vec<_> = pool.iter().filter(|ps| session.get(ps).is_none()).collect();
        if candidates.is_empty() || session.remaining() == 0 {
            break;
        }
        let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = session
            .records()
            .iter()
            .map(|r| (encode_real(pool, &r.strategy), r.pv))
            .unzip();
        let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gp = GaussianProcess::fit(xs, &ys, config.length_scale, config.noise)?;
        let scale = gp_scale(&ys);
        let mut pick = 0;
        let mut pick_ei = f64::NEG_INFINITY;
        // Candidates are in canonical order; strict comparison keeps the first of ties.
        for (i, ps) in candidates.iter().enumerate() {
            let (m, s) = gp.predict(&encode_real(pool, ps));
            let ei = expected_improvement(m, s, best, config.xi * scale);
            if ei > pick_ei {
                pick = i;
                pick_ei = ei;
            }
        }
        if session.evaluate(&candidates[pick])?.is_none() {
            break;
        }
    }
    session.finish()
}

/// Standard deviation of the observations (1 when degenerate), the unit of `xi`.
fn gp_scale(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        var.sqrt()
    } else {
        1.0
    }
}
