use serde::{Deserialize, Serialize};

use super::{decode_real, encode_real, SearchBudget, SearchResult, Session};
use crate::error::{Error, Result};
use crate::metrics::{EvaluationRecord, Evaluator};
use crate::perturb::{PerturbationPool, PerturbationStrategy};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EaConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Scale of the difference vector, in (0, 1].
    pub epsilon: f64,
    /// Probability that a gene keeps the parent's level, in [0, 1].
    pub replacement_rate: f64,
    pub seed: u64,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            population_size: 8,
            generations: 10,
            epsilon: 0.5,
            replacement_rate: 0.9,
            seed: 0,
        }
    }
}

impl EaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::config(
                "EA population_size must be >= 4 (three distinct partners per individual)",
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config(format!(
                "EA epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.replacement_rate) {
            return Err(Error::config(format!(
                "EA replacement_rate must lie in [0, 1], got {}",
                self.replacement_rate
            )));
        }
        Ok(())
    }
}

/// `decode(clamp(e1 + ε·(e2 − e3)))` over the real embedding.
pub(crate) fn mutate(
    pool: &PerturbationPool,
    r1: &PerturbationStrategy,
    r2: &PerturbationStrategy,
    r3: &PerturbationStrategy,
    epsilon: f64,
) -> Result<PerturbationStrategy> {
    let (e1, e2, e3) = (encode_real(pool, r1), encode_real(pool, r2), encode_real(pool, r3));
    let v: Vec<f64> = (0..e1.len())
        .map(|j| (e1[j] + epsilon * (e2[j] - e3[j])).clamp(0.0, 1.0))
        .collect();
    decode_real(pool, &v)
}

/// Gene `j` keeps the parent's level when the draw is below `replacement_rate`.
pub(crate) fn crossover(
    parent: &PerturbationStrategy,
    mutant: &PerturbationStrategy,
    replacement_rate: f64,
    rng: &mut Rng,
) -> PerturbationStrategy {
    let genes = parent
        .indices()
        .iter()
        .zip(mutant.indices())
        .map(|(&p, &m)| if rng.uniform() < replacement_rate { p } else { m })
        .collect();
    PerturbationStrategy::from_indices(genes)
}

/// Three distinct population indices, all different from `i`.
fn partners(rng: &mut Rng, n: usize, i: usize) -> [usize; 3] {
    let picked = rng.sample_indices(n - 1, 3);
    let shift = |j: usize| if j >= i { j + 1 } else { j };
    [shift(picked[0]), shift(picked[1]), shift(picked[2])]
}

/// Discrete differential evolution maximizing pv. A child replaces its
/// parent when its pv is at least the parent's.
pub fn search_ea(evaluator: &Evaluator, config: &EaConfig, budget: &SearchBudget) -> Result<SearchResult> {
    config.validate()?;
    let pool = evaluator.pool();
    let n = config.population_size;
    if n as u64 > pool.size() {
        return Err(Error::config(format!(
            "EA population_size {n} exceeds the pool size {}",
            pool.size()
        )));
    }
    let mut session = Session::new(evaluator, "ea", budget)?;
    let mut rng = Rng::new(config.seed);

    let initial: Vec<PerturbationStrategy> = rng
        .sample_indices(pool.size() as usize, n)
        .into_iter()
        .map(|i| pool.strategy_at(i as u64))
        .collect();
    let scored = session.evaluate_batch(&initial)?;
    let Some(mut population) = scored.into_iter().collect::<Option<Vec<EvaluationRecord>>>() else {
        return session.finish();
    };

    for _ in 0..config.generations.min(budget.max_iterations) {
        let mut children = Vec::with_capacity(n);
        for i in 0..n {
            let [r1, r2, r3] = partners(&mut rng, n, i);
            let mutant = mutate(
                pool,
                &population[r1].strategy,
                &population[r2].strategy,
                &population[r3].strategy,
                config.epsilon,
            )?;
            children.push(crossover(
                &population[i].strategy,
                &mutant,
                config.replacement_rate,
                &mut rng,
            ));
        }
        let scored = session.evaluate_batch(&children)?;
        let exhausted = scored.iter().any(Option::is_none);
        for (slot, child) in population.iter_mut().zip(scored) {
            if let Some(child) = child {
                if child.pv >= slot.pv {
                    *slot = child;
                }
            }
        }
        if exhausted {
            break;
        }
    }
    session.finish()
}
