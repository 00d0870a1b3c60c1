use super::{SearchBudget, SearchResult, Session};
use crate::error::{Error, Result};
use crate::metrics::Evaluator;

/// Evaluates the whole pool in enumeration order. Use
/// [`SearchResult::ranked`] for the pv ranking.
pub fn brute_force(evaluator: &Evaluator, budget: &SearchBudget) -> Result<SearchResult> {
    let pool = evaluator.pool();
    let size = pool.size();
    if size > budget.max_evaluations as u64 {
        return Err(Error::config(format!(
            "brute force needs {size} evaluations but the budget allows {}",
            budget.max_evaluations
        )));
    }
    let mut session = Session::new(evaluator, "brute", budget)?;
    let all: Vec<_> = pool.iter().collect();
    session.evaluate_batch(&all)?;
    session.finish()
}
