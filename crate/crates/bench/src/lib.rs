//! Shared fixtures for the benchmarks.

use variance_forge_core::metrics::{EvalContext, Evaluator};
use variance_forge_core::presets;
use variance_forge_core::Result;

/// A fresh evaluator on the standard instance, so every iteration pays for
/// its own evaluations.
pub fn fresh_evaluator() -> Result<Evaluator> {
    let ctx: EvalContext = presets::standard_context()?;
    Evaluator::uncached(ctx)
}
