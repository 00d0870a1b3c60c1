//! Minimal deterministic feed-forward classifier.
//!
//! Dense layers with a shared hidden activation and a softmax output,
//! trained by plain mini-batch SGD on mean cross-entropy. Backpropagation
//! returns gradients for every weight, bias and input entry; the input
//! gradients drive the adversarial-attack factor.

mod matrix;
mod train;

use serde::{Deserialize, Serialize};

pub use matrix::Matrix;
pub use train::{train, TrainConfig};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and activation `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// Zero-mean normal, std `sqrt(2 / fan_in)`.
    Kaiming,
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    Xavier,
}

/// Architecture and initialization of the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawModelConfig")]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub init_scheme: InitScheme,
    pub init_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelConfig {
    input_dim: usize,
    #[serde(default)]
    hidden_layers: Vec<usize>,
    output_dim: usize,
    #[serde(default = "default_activation")]
    activation: Activation,
    #[serde(default = "default_init")]
    init_scheme: InitScheme,
    #[serde(default)]
    init_seed: u64,
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn default_init() -> InitScheme {
    InitScheme::Kaiming
}

impl TryFrom<RawModelConfig> for ModelConfig {
    type Error = Error;

    fn try_from(r: RawModelConfig) -> Result<Self> {
        let cfg = ModelConfig {
            input_dim: r.input_dim,
            hidden_layers: r.hidden_layers,
            output_dim: r.output_dim,
            activation: r.activation,
            init_scheme: r.init_scheme,
            init_seed: r.init_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, output_dim: usize) -> Result<Self> {
        let cfg = ModelConfig {
            input_dim,
            hidden_layers,
            output_dim,
            activation: Activation::Relu,
            init_scheme: InitScheme::Kaiming,
            init_seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_init(mut self, scheme: InitScheme, seed: u64) -> Self {
        self.init_scheme = scheme;
        self.init_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be at least 1"));
        }
        if self.output_dim < 2 {
            return Err(Error::config("output_dim must be at least 2"));
        }
        if let Some(i) = self.hidden_layers.iter().position(|&w| w == 0) {
            return Err(Error::config(format!("hidden layer {i} has width 0")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_layers.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_layers);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One dense layer; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Trained or freshly initialized model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<Layer>,
    pub arch: ModelConfig,
}

impl Parameters {
    /// Checks the shape chain against `arch` and that every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let dims = self.arch.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "architecture has {} layers, parameters have {}",
                dims.len(),
                self.layers.len()
            )));
        }
        for (i, ((fan_in, fan_out), layer)) in dims.iter().zip(&self.layers).enumerate() {
            if layer.weight.shape() != (*fan_out, *fan_in) || layer.bias.len() != *fan_out {
                return Err(Error::shape(format!(
                    "layer {i}: expected weight {fan_out}x{fan_in} and bias {fan_out}, got {:?} and {}",
                    layer.weight.shape(),
                    layer.bias.len()
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::data("non-finite parameter entry"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn num_classes(&self) -> usize {
        self.arch.output_dim
    }

    /// All weights then biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn zeros_like(&self) -> Parameters {
        Parameters {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
            arch: self.arch.clone(),
        }
    }
}

pub fn init_parameters(config: &ModelConfig) -> Result<Parameters> {
    config.validate()?;
    let root = Rng::new(config.init_seed);
    let layers = config
        .layer_dims()
        .into_iter()
        .enumerate()
        .map(|(i, (fan_in, fan_out))| {
            let mut rng = root.child(&format!("layer/{i}"));
            let data: Vec<f64> = match config.init_scheme {
                InitScheme::Kaiming => {
                    let std = (2.0 / fan_in as f64).sqrt();
                    (0..fan_in * fan_out).map(|_| std * rng.normal()).collect()
                }
                InitScheme::Xavier => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..fan_in * fan_out)
                        .map(|_| rng.uniform_range(-limit, limit))
                        .collect()
                }
            };
            Layer {
                weight: Matrix::from_raw(fan_out, fan_in, data),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(Parameters {
        layers,
        arch: config.clone(),
    })
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of hidden layer `l`.
    activations: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    probs: Matrix,
}

fn affine(input: &Matrix, layer: &Layer) -> Matrix {
    let (n, fan_in) = input.shape();
    let fan_out = layer.weight.rows();
    let mut out = Vec::with_capacity(n * fan_out);
    for x in input.iter_rows() {
        for o in 0..fan_out {
            let w = layer.weight.row(o);
            let mut acc = layer.bias[o];
            for k in 0..fan_in {
                acc += w[k] * x[k];
            }
            out.push(acc);
        }
    }
    Matrix::from_raw(n, fan_out, out)
}

fn softmax_rows(logits: &mut Matrix) {
    for r in 0..logits.rows() {
        let row = logits.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
            // Floor underflow; NaN passes through so divergence stays visible.
            if *v < f64::MIN_POSITIVE {
                *v = f64::MIN_POSITIVE;
            }
        }
    }
}

fn check_inputs(params: &Parameters, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != params.arch.input_dim {
        return Err(Error::shape(format!(
            "inputs have {} columns, model expects {}",
            inputs.cols(),
            params.arch.input_dim
        )));
    }
    Ok(())
}

fn forward_trace(params: &Parameters, inputs: &Matrix) -> Result<ForwardTrace> {
    check_inputs(params, inputs)?;
    let act = params.arch.activation;
    let last = params.layers.len() - 1;
    let mut activations = vec![inputs.clone()];
    let mut pre_activations = Vec::with_capacity(last);
    for layer in &params.layers[..last] {
        let z = affine(activations.last().expect("non-empty"), layer);
        let a = Matrix::from_raw(z.rows(), z.cols(), z.data().iter().map(|&v| act.apply(v)).collect());
        pre_activations.push(z);
        activations.push(a);
    }
    let mut probs = affine(activations.last().expect("non-empty"), &params.layers[last]);
    softmax_rows(&mut probs);
    Ok(ForwardTrace {
        activations,
        pre_activations,
        probs,
    })
}

/// Per-sample class probabilities (softmax of the final logits).
pub fn forward(params: &Parameters, inputs: &Matrix) -> Result<Matrix> {
    forward_trace(params, inputs).map(|t| t.probs)
}

fn check_labels(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} probability rows but {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= probs.cols()) {
        return Err(Error::data(format!(
            "label {y} at sample {i} is out of range for {} classes",
            probs.cols()
        )));
    }
    Ok(())
}

/// Mean negative log-probability of the true class.
pub fn loss(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels.iter().enumerate().map(|(i, &y)| -probs.get(i, y).ln()).sum();
    Ok(total / labels.len() as f64)
}

/// Per-sample cross-entropy.
pub fn sample_losses(probs: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(probs, labels)?;
    Ok(labels.iter().enumerate().map(|(i, &y)| -probs.get(i, y).ln()).collect())
}

/// Gradients of the mean cross-entropy loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Same shapes as the model's parameters.
    pub params: Parameters,
    pub inputs: Matrix,
    pub loss: f64,
}

pub fn backward(params: &Parameters, inputs: &Matrix, labels: &[usize]) -> Result<Gradients> {
    let trace = forward_trace(params, inputs)?;
    let loss_value = loss(&trace.probs, labels)?;
    let n = labels.len().max(1) as f64;
    let act = params.arch.activation;

    // d loss / d logits = (p - onehot) / n
    let mut delta = trace.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }

    let mut grads = params.zeros_like();
    for l in (0..params.layers.len()).rev() {
        let a_prev = &trace.activations[l];
        let layer = &params.layers[l];
        let g = &mut grads.layers[l];
        let (fan_out, fan_in) = layer.weight.shape();
        for s in 0..delta.rows() {
            let d = delta.row(s);
            let a = a_prev.row(s);
            for (o, &dv) in d.iter().enumerate().take(fan_out) {
                if dv == 0.0 {
                    continue;
                }
                g.bias[o] += dv;
                for (gw, &ak) in g.weight.row_mut(o).iter_mut().zip(a) {
                    *gw += dv * ak;
                }
            }
        }
        // Propagate to the previous activation.
        let mut d_prev = Matrix::zeros(delta.rows(), fan_in);
        for s in 0..delta.rows() {
            let d = delta.row(s);
            let out = d_prev.row_mut(s);
            for (o, &dv) in d.iter().enumerate().take(fan_out) {
                for (ok, &wk) in out.iter_mut().zip(layer.weight.row(o)) {
                    *ok += dv * wk;
                }
            }
        }
        if l > 0 {
            let z = &trace.pre_activations[l - 1];
            let a = &trace.activations[l];
            for ((dv, &zv), &av) in d_prev.data_mut().iter_mut().zip(z.data()).zip(a.data()) {
                *dv *= act.derivative(zv, av);
            }
        }
        delta = d_prev;
    }

    Ok(Gradients {
        params: grads,
        inputs: delta,
        loss: loss_value,
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &Parameters, inputs: &Matrix) -> Result<Vec<usize>> {
    let probs = forward(params, inputs)?;
    Ok(probs.iter_rows().map(argmax).collect())
}

#[cfg(test)]
mod tests;
