//! Diagnostics for the three robustness conditions: perturbed inputs,
//! perturbed (noisy) training labels, and perturbed configurations.
//!
//! Each condition is an implication "distance below a radius ⇒ prediction
//! holds". The check reports the distance, whether the premise holds, whether
//! the conclusion holds, and the implication's truth value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{argmax, forward, Matrix, Parameters};

/// A `p`-norm with `p >= 1`, or the infinity norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PNorm {
    P(f64),
    Inf,
}

impl PNorm {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(PNorm::Inf)
        } else if p >= 1.0 && p.is_finite() {
            Ok(PNorm::P(p))
        } else {
            Err(Error::config(format!("p-norm needs p >= 1, got {p}")))
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            PNorm::Inf => diffs.fold(0.0, f64::max),
            PNorm::P(1.0) => diffs.sum(),
            PNorm::P(2.0) => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            PNorm::P(p) => diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

impl std::str::FromStr for PNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "max" => Ok(PNorm::Inf),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::config(format!("`{s}` is not a p-norm")))?;
                PNorm::new(p)
            }
        }
    }
}

/// Noisy-label condition: `‖f(x) − onehot(ŷ)‖_p < δ ⇒ argmax f(x) = y`.
#[derive(Debug, Clone, Copy)]
pub struct OutputCheck<'a> {
    pub true_labels: &'a [usize],
    pub noisy_labels: &'a [usize],
    pub delta: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RobustnessQuery<'a> {
    /// `f_θ`, the unperturbed model.
    pub base: &'a Parameters,
    /// `f_θ̂`, the model under evaluation; used for the input and label conditions.
    pub perturbed: &'a Parameters,
    pub inputs: &'a Matrix,
    pub perturbed_inputs: &'a Matrix,
    pub sigma: f64,
    pub eta: f64,
    pub norm: PNorm,
    pub output: Option<OutputCheck<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub input_distance: f64,
    pub input_premise: bool,
    /// `f_θ̂(x̂) = f_θ̂(x)`.
    pub prediction_stable: bool,
    pub input_robust: bool,
    /// `f_θ(x) = f_θ̂(x)`.
    pub config_agrees: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_robust: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessVerdict {
    pub norm: PNorm,
    pub sigma: f64,
    pub eta: f64,
    pub max_input_distance: f64,
    /// Every sample satisfies the input implication.
    pub input_robust: bool,
    pub input_violations: usize,
    /// `None` when the two parameter sets have different architectures.
    pub config_distance: Option<f64>,
    pub config_premise: bool,
    pub config_agreement: f64,
    pub config_robust: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_robust: Option<bool>,
    pub samples: Vec<SampleVerdict>,
}

/// Evaluates the robustness conditions; pure diagnostics.
pub fn check_robustness_conditions(q: &RobustnessQuery<'_>) -> Result<RobustnessVerdict> {
    if q.inputs.shape() != q.perturbed_inputs.shape() {
        return Err(Error::shape(format!(
            "clean inputs {:?} and perturbed inputs {:?} differ in shape",
            q.inputs.shape(),
            q.perturbed_inputs.shape()
        )));
    }
    let n = q.inputs.rows();
    if let Some(o) = &q.output {
        if o.true_labels.len() != n || o.noisy_labels.len() != n {
            return Err(Error::shape("label-condition vectors must have one entry per sample"));
        }
    }
    let pert_clean = forward(q.perturbed, q.inputs)?;
    let pert_adv = forward(q.perturbed, q.perturbed_inputs)?;
    let base_clean = forward(q.base, q.inputs)?;

    let config_distance =
        (q.base.arch == q.perturbed.arch).then(|| q.norm.distance(&q.base.flatten(), &q.perturbed.flatten()));
    let config_premise = config_distance.is_some_and(|d| d < q.eta);

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let input_distance = q.norm.distance(q.inputs.row(i), q.perturbed_inputs.row(i));
        let input_premise = input_distance < q.sigma;
        let prediction_stable = argmax(pert_adv.row(i)) == argmax(pert_clean.row(i));
        let config_agrees = argmax(base_clean.row(i)) == argmax(pert_clean.row(i));
        let (output_distance, output_robust) = match &q.output {
            Some(o) => {
                let m = pert_clean.cols();
                if o.noisy_labels[i] >= m || o.true_labels[i] >= m {
                    return Err(Error::data(format!("label out of range at sample {i}")));
                }
                let onehot: Vec<f64> = (0..m).map(|j| f64::from(u8::from(j == o.noisy_labels[i]))).collect();
                let d = q.norm.distance(pert_clean.row(i), &onehot);
                let robust = d >= o.delta || argmax(pert_clean.row(i)) == o.true_labels[i];
                (Some(d), Some(robust))
            }
            None => (None, None),
        };
        samples.push(SampleVerdict {
            input_distance,
            input_premise,
            prediction_stable,
            input_robust: !input_premise || prediction_stable,
            config_agrees,
            output_distance,
            output_robust,
        });
    }

    let input_violations = samples.iter().filter(|s| !s.input_robust).count();
    let agree = samples.iter().filter(|s| s.config_agrees).count();
    Ok(RobustnessVerdict {
        norm: q.norm,
        sigma: q.sigma,
        eta: q.eta,
        max_input_distance: samples.iter().map(|s| s.input_distance).fold(0.0, f64::max),
        input_robust: input_violations == 0,
        input_violations,
        config_distance,
        config_premise,
        config_agreement: if n == 0 { 1.0 } else { agree as f64 / n as f64 },
        config_robust: !config_premise || agree == n,
        output_robust: q
            .output
            .as_ref()
            .map(|_| samples.iter().all(|s| s.output_robust == Some(true))),
        samples,
    })
}
