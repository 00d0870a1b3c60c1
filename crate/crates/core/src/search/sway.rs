use serde::{Deserialize, Serialize};

use super::{distance, encode_real, SearchBudget, SearchResult, Session};
use crate::error::{Error, Result};
use crate::metrics::Evaluator;
use crate::perturb::PerturbationStrategy;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwayConfig {
    /// Strategies drawn from the pool; `None` or a value at least the pool
    /// size takes the whole pool.
    pub candidate_sample_size: Option<usize>,
    /// Candidate sets this small are evaluated exhaustively; at least 2.
    pub size_threshold: usize,
    pub seed: u64,
}

impl Default for SwayConfig {
    fn default() -> Self {
        SwayConfig {
            candidate_sample_size: None,
            size_threshold: 4,
            seed: 0,
        }
    }
}

impl SwayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size_threshold < 2 {
            return Err(Error::config("SWAY size_threshold must be >= 2"));
        }
        if self.candidate_sample_size.is_some_and(|n| n < self.size_threshold) {
            return Err(Error::config("SWAY candidate_sample_size must be >= size_threshold"));
        }
        Ok(())
    }
}

/// First candidate at maximal distance from `from`.
fn farthest(points: &[Vec<f64>], from: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = distance(p, from);
        if d > best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Recursive halving: split the candidates at the median of their
/// projection on the axis between two far-apart poles, evaluate the poles,
/// keep the half of the better pole. Small sets are evaluated exhaustively.
pub fn search_sway(evaluator: &Evaluator, config: &SwayConfig, budget: &SearchBudget) -> Result<SearchResult> {
    config.validate()?;
    let pool = evaluator.pool();
    let mut session = Session::new(evaluator, "sway", budget)?;
    let mut rng = Rng::new(config.seed);
    let size = pool.size() as usize;
    let mut candidates: Vec<PerturbationStrategy> = match config.candidate_sample_size {
        Some(n) if n < size => rng
            .sample_indices(size, n)
            .into_iter()
            .map(|i| pool.strategy_at(i as u64))
            .collect(),
        _ => pool.iter().collect(),
    };
    candidates.sort();

    let mut rounds = 0;
    while candidates.len() > config.size_threshold && rounds < budget.max_iterations {
        rounds += 1;
        let points: Vec<Vec<f64>> = candidates.iter().map(|ps| encode_real(pool, ps)).collect();
        let anchor = rng.below(points.len());
        let east = farthest(&points, &points[anchor]);
        let west = farthest(&points, &points[east]);
        let c = distance(&points[east], &points[west]);
        if c == 0.0 {
            break;
        }
        let mut projected: Vec<(f64, PerturbationStrategy)> = points
            .iter()
            .zip(&candidates)
            .map(|(p, ps)| {
                let (a, b) = (distance(p, &points[west]), distance(p, &points[east]));
                ((a * a + c * c - b * b) / (2.0 * c), ps.clone())
            })
            .collect();
        projected.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
        let poles = [candidates[west].clone(), candidates[east].clone()];
        let scored = session.evaluate_batch(&poles)?;
        let (Some(w), Some(e)) = (&scored[0], &scored[1]) else {
            break;
        };
        let keep_west = w.pv > e.pv || (w.pv == e.pv && poles[0] < poles[1]);
        let half = projected.len() / 2;
        let kept = if keep_west {
            &projected[..half]
        } else {
            &projected[half..]
        };
        candidates = kept.iter().map(|(_, ps)| ps.clone()).collect();
        candidates.sort();
    }
    session.evaluate_batch(&candidates)?;
    session.finish()
}
