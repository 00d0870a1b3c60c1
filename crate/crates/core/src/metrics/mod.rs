//! Confidence-gap scoring and the strategy evaluation pipeline.
//!
//! The C-CDD score of a batch is the mean of `p[desired] − p[predicted]`,
//! where the prediction is the arg-max class with ties going to the lowest
//! index. Correct predictions contribute exactly zero whatever their
//! confidence, so the score only moves through misclassified samples.

mod cache;
mod evaluator;

pub use cache::{fingerprint, EvalCache};
pub use evaluator::{Baseline, EvalContext, EvaluationRecord, Evaluator};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{argmax, forward, Matrix, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcddScore {
    pub value: f64,
    pub sample_count: usize,
}

fn check(probs: &Matrix, desired: &[usize]) -> Result<()> {
    if probs.rows() != desired.len() {
        return Err(Error::shape(format!(
            "{} probability rows but {} desired labels",
            probs.rows(),
            desired.len()
        )));
    }
    if probs.rows() == 0 {
        return Err(Error::Domain("score of an empty sample set is undefined".into()));
    }
    if let Some((i, &d)) = desired.iter().enumerate().find(|(_, &d)| d >= probs.cols()) {
        return Err(Error::data(format!(
            "desired class {d} at sample {i} is out of range for {} classes",
            probs.cols()
        )));
    }
    Ok(())
}

/// C-CDD of a probability matrix (one row per sample).
pub fn c_cdd_from_probs(probs: &Matrix, desired: &[usize]) -> Result<CcddScore> {
    check(probs, desired)?;
    let total: f64 = probs
        .iter_rows()
        .zip(desired)
        .map(|(row, &d)| row[d] - row[argmax(row)])
        .sum();
    Ok(CcddScore {
        value: total / desired.len() as f64,
        sample_count: desired.len(),
    })
}

pub fn c_cdd(model: &Parameters, x: &Matrix, desired: &[usize]) -> Result<CcddScore> {
    if x.rows() == 0 {
        return Err(Error::Domain("score of an empty sample set is undefined".into()));
    }
    c_cdd_from_probs(&forward(model, x)?, desired)
}

/// Fraction of rows whose arg-max equals the desired class.
pub fn accuracy_from_probs(probs: &Matrix, desired: &[usize]) -> Result<f64> {
    check(probs, desired)?;
    let hits = probs
        .iter_rows()
        .zip(desired)
        .filter(|(row, &d)| argmax(row) == d)
        .count();
    Ok(hits as f64 / desired.len() as f64)
}

pub fn accuracy(model: &Parameters, x: &Matrix, desired: &[usize]) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::Domain("accuracy of an empty sample set is undefined".into()));
    }
    accuracy_from_probs(&forward(model, x)?, desired)
}
