use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{SearchBudget, SearchResult, Session};
use crate::error::{Error, Result};
use crate::metrics::{EvaluationRecord, Evaluator};
use crate::perturb::{PerturbationPool, PerturbationStrategy};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// α in (0, 1].
    pub learning_rate: f64,
    /// γ in [0, 1].
    pub discount: f64,
    /// Probability of a uniformly random action.
    pub exploration: f64,
    /// Equal-width bins of the perturbed score over [−1, 0]; at least 2.
    pub ccdd_bins: usize,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            episodes: 50,
            steps_per_episode: 6,
            learning_rate: 0.5,
            discount: 0.9,
            exploration: 0.2,
            ccdd_bins: 10,
            seed: 0,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config("RL learning_rate must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.discount) || !(0.0..=1.0).contains(&self.exploration) {
            return Err(Error::config("RL discount and exploration must lie in [0, 1]"));
        }
        if self.ccdd_bins < 2 {
            return Err(Error::config("RL ccdd_bins must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RlState {
    pub levels: Vec<usize>,
    pub ccdd_bin: usize,
}

/// Bin of a score in [−1, 0]; 0 falls into the top bin.
pub fn ccdd_bin(value: f64, bins: usize) -> usize {
    (((value + 1.0) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// `Q + α·(r + γ·max Q(s′) − Q)`.
pub fn q_update(q: f64, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    q + alpha * (reward + gamma * max_next - q)
}

/// Tabular action values. Action `(f, l)` sets factor `f` to level `l`;
/// unseen state–action pairs are worth 0.
#[derive(Debug, Clone)]
pub struct QLearner {
    actions: Vec<(usize, usize)>,
    q: HashMap<RlState, Vec<f64>>,
    alpha: f64,
    gamma: f64,
}

impl QLearner {
    pub fn new(pool: &PerturbationPool, alpha: f64, gamma: f64) -> Self {
        let actions = pool
            .level_counts()
            .iter()
            .enumerate()
            .flat_map(|(f, &l)| (0..l).map(move |k| (f, k)))
            .collect();
        QLearner {
            actions,
            q: HashMap::new(),
            alpha,
            gamma,
        }
    }

    pub fn actions(&self) -> &[(usize, usize)] {
        &self.actions
    }

    pub fn value(&self, s: &RlState, a: usize) -> f64 {
        self.q.get(s).map_or(0.0, |v| v[a])
    }

    pub fn max_value(&self, s: &RlState) -> f64 {
        self.q
            .get(s)
            .map_or(0.0, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Highest-valued action, lowest index among ties.
    pub fn greedy(&self, s: &RlState) -> usize {
        let Some(v) = self.q.get(s) else { return 0 };
        let mut best = 0;
        for (a, &q) in v.iter().enumerate() {
            if q > v[best] {
                best = a;
            }
        }
        best
    }

    /// ε-greedy; ties among the best actions are broken at random.
    fn choose(&self, s: &RlState, epsilon: f64, rng: &mut Rng) -> usize {
        if rng.uniform() < epsilon {
            return rng.below(self.actions.len());
        }
        let top = self.max_value(s);
        let ties: Vec<usize> = (0..self.actions.len()).filter(|&a| self.value(s, a) == top).collect();
        ties[rng.below(ties.len())]
    }

    pub fn apply(&self, ps: &PerturbationStrategy, a: usize) -> PerturbationStrategy {
        let (f, l) = self.actions[a];
        let mut next = ps.clone();
        next.indices_mut()[f] = l;
        next
    }

    pub fn update(&mut self, s: &RlState, a: usize, reward: f64, next: &RlState) {
        let max_next = self.max_value(next);
        let n = self.actions.len();
        let row = self.q.entry(s.clone()).or_insert_with(|| vec![0.0; n]);
        row[a] = q_update(row[a], reward, max_next, self.alpha, self.gamma);
    }
}

fn state_of(record: &EvaluationRecord, bins: usize) -> RlState {
    RlState {
        levels: record.strategy.indices().to_vec(),
        ccdd_bin: ccdd_bin(record.perturbed_ccdd.value, bins),
    }
}

/// Tabular Q-learning where each step changes one factor's level and the
/// reward is the change in pv. Episodes start from the all-off strategy.
pub fn train_rl(evaluator: &Evaluator, config: &RlConfig, budget: &SearchBudget) -> Result<(SearchResult, QLearner)> {
    config.validate()?;
    let pool = evaluator.pool();
    let mut session = Session::new(evaluator, "rl", budget)?;
    let mut rng = Rng::new(config.seed);
    let mut learner = QLearner::new(pool, config.learning_rate, config.discount);

    'episodes: for _ in 0..config.episodes.min(budget.max_iterations) {
        let Some(mut current) = session.evaluate(&pool.all_off())? else {
            break;
        };
        let mut state = state_of(&current, config.ccdd_bins);
        for _ in 0..config.steps_per_episode {
            let a = learner.choose(&state, config.exploration, &mut rng);
            let Some(next) = session.evaluate(&learner.apply(&current.strategy, a))? else {
                break 'episodes;
            };
            let next_state = state_of(&next, config.ccdd_bins);
            learner.update(&state, a, next.pv - current.pv, &next_state);
            current = next;
            state = next_state;
        }
    }
    Ok((session.finish()?, learner))
}

pub fn search_rl(evaluator: &Evaluator, config: &RlConfig, budget: &SearchBudget) -> Result<SearchResult> {
    train_rl(evaluator, config, budget).map(|(r, _)| r)
}
