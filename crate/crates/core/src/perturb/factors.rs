//! Individual perturbation operators, one per factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{backward, Matrix, ModelConfig, Parameters, TrainConfig};
use crate::rng::Rng;

/// Row-stochastic label-transition matrix: `tau[i][j]` is the probability
/// that true class `i` is relabelled `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TauMatrix {
    rows: Vec<Vec<f64>>,
}

impl TauMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::config("tau matrix must not be empty"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::config(format!(
                    "tau row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::config(format!("tau row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!("tau row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(m: usize) -> Self {
        let rows = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    /// Keeps a label with probability `1 - rate`, otherwise moves it to one of
    /// the other `m - 1` classes uniformly.
    pub fn uniform(m: usize, rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::config(format!("flip rate {rate} outside [0, 1]")));
        }
        if m < 2 {
            return Ok(Self::identity(m));
        }
        let off = rate / (m - 1) as f64;
        let rows = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 - rate } else { off }).collect())
            .collect();
        Self::new(rows)
    }

    pub fn num_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn is_identity(&self) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(i, r)| r.iter().enumerate().all(|(j, &p)| p == if i == j { 1.0 } else { 0.0 }))
    }
}

impl TryFrom<Vec<Vec<f64>>> for TauMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        TauMatrix::new(rows)
    }
}

impl From<TauMatrix> for Vec<Vec<f64>> {
    fn from(t: TauMatrix) -> Self {
        t.rows
    }
}

/// Fast gradient sign step `x + sigma * sign(grad_x loss)`.
///
/// Coordinates with zero gradient stay put. When `ranges` is given each
/// coordinate is clamped to its feature range, widened to include the clean
/// value so the step never exceeds `sigma` in the infinity norm.
pub fn apply_fgsm(
    model: &Parameters,
    x: &Matrix,
    y: &[usize],
    sigma: f64,
    ranges: Option<&[(f64, f64)]>,
) -> Result<Matrix> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!(
            "FGSM sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if let Some(r) = ranges {
        if r.len() != x.cols() {
            return Err(Error::shape("one feature range per input column required"));
        }
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let grads = backward(model, x, y)?;
    let cols = x.cols();
    let data = x
        .data()
        .iter()
        .zip(grads.inputs.data())
        .enumerate()
        .map(|(i, (&v, &g))| {
            let step = if g > 0.0 {
                sigma
            } else if g < 0.0 {
                -sigma
            } else {
                0.0
            };
            let moved = within(v, v + step, sigma);
            match ranges {
                Some(r) => {
                    let (lo, hi) = r[i % cols];
                    moved.clamp(lo.min(v), hi.max(v))
                }
                None => moved,
            }
        })
        .collect();
    Matrix::new(x.rows(), cols, data)
}

/// Pulls `moved` toward `origin` one ulp at a time until `|moved - origin| <= bound`.
fn within(origin: f64, mut moved: f64, bound: f64) -> f64 {
    while (moved - origin).abs() > bound {
        moved = if moved > origin {
            moved.next_down()
        } else {
            moved.next_up()
        };
    }
    moved
}

/// Covariate shift: `x̂_ij = x_ij (1 + s_j) + d_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodShift {
    /// Euclidean norm of the shared shift vector `d`.
    pub shift: f64,
    /// Bound on each per-feature scale perturbation `|s_j|`.
    pub scale: f64,
}

/// Shift and per-feature rescaling, both of size `magnitude`.
pub fn apply_ood_shift(x: &Matrix, magnitude: f64, seed: u64) -> Result<Matrix> {
    apply_ood(
        x,
        &OodShift {
            shift: magnitude,
            scale: magnitude,
        },
        seed,
    )
}

pub fn apply_ood(x: &Matrix, ood: &OodShift, seed: u64) -> Result<Matrix> {
    let valid = |v: f64| v >= 0.0 && v.is_finite();
    if !valid(ood.shift) || !valid(ood.scale) {
        return Err(Error::config("OOD shift and scale must be finite and >= 0"));
    }
    if ood.shift == 0.0 && ood.scale == 0.0 {
        return Ok(x.clone());
    }
    let dims = x.cols();
    let root = Rng::new(seed);
    let mut dir_rng = root.child("direction");
    let mut direction: Vec<f64> = (0..dims).map(|_| dir_rng.normal()).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        direction.iter_mut().for_each(|v| *v *= ood.shift / norm);
    } else if dims > 0 {
        direction[0] = ood.shift;
    }
    let mut scale_rng = root.child("scale");
    let scales: Vec<f64> = (0..dims)
        .map(|_| {
            if ood.scale > 0.0 {
                scale_rng.uniform_range(-ood.scale, ood.scale)
            } else {
                0.0
            }
        })
        .collect();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let j = i % dims;
            v * (1.0 + scales[j]) + direction[j]
        })
        .collect();
    Matrix::new(x.rows(), dims, data)
}

/// Resamples each label from its `tau` row.
pub fn apply_label_flip(y: &[usize], tau: &TauMatrix, seed: u64) -> Result<Vec<usize>> {
    let m = tau.num_classes();
    if let Some(&bad) = y.iter().find(|&&l| l >= m) {
        return Err(Error::config(format!(
            "label {bad} out of range for a {m}x{m} tau matrix"
        )));
    }
    let mut rng = Rng::new(seed);
    Ok(y.iter()
        .map(|&label| {
            let u = rng.uniform();
            let row = tau.row(label);
            let mut acc = 0.0;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return j;
                }
            }
            // Rounding left u above the final cumulative sum.
            row.iter().rposition(|&p| p > 0.0).unwrap_or(label)
        })
        .collect())
}

/// With probability `rate`, replaces a label by a uniform draw over the
/// other `num_classes - 1` classes.
pub fn apply_label_noise(y: &[usize], num_classes: usize, rate: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::config(format!("label noise rate {rate} outside [0, 1]")));
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= num_classes) {
        return Err(Error::data(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    if rate == 0.0 || num_classes < 2 {
        return Ok(y.to_vec());
    }
    let mut rng = Rng::new(seed);
    Ok(y.iter()
        .map(|&label| {
            if rng.uniform() < rate {
                let k = rng.below(num_classes - 1);
                if k >= label {
                    k + 1
                } else {
                    k
                }
            } else {
                label
            }
        })
        .collect())
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn noise_std(values: &[f64], scale: f64) -> f64 {
    let std = population_std(values);
    let base = if std > 0.0 && std.is_finite() { std } else { 1.0 };
    scale * base
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::config(format!(
            "modification scale must be finite and >= 0, got {scale}"
        )));
    }
    Ok(())
}

/// Adds Gaussian noise to one weight matrix chosen uniformly by `seed`.
/// The noise std is `scale` times the std of that matrix's entries.
pub fn apply_weight_mod(theta: &Parameters, scale: f64, seed: u64) -> Result<Parameters> {
    check_scale(scale)?;
    if scale == 0.0 || theta.layers.is_empty() {
        return Ok(theta.clone());
    }
    let mut rng = Rng::new(seed);
    let layer = rng.below(theta.layers.len());
    let mut out = theta.clone();
    let w = &mut out.layers[layer].weight;
    let std = noise_std(w.data(), scale);
    for v in w.data_mut() {
        *v += std * rng.normal();
    }
    Ok(out)
}

/// Bias counterpart of [`apply_weight_mod`].
pub fn apply_bias_mod(theta: &Parameters, scale: f64, seed: u64) -> Result<Parameters> {
    check_scale(scale)?;
    if scale == 0.0 || theta.layers.is_empty() {
        return Ok(theta.clone());
    }
    let mut rng = Rng::new(seed);
    let layer = rng.below(theta.layers.len());
    let mut out = theta.clone();
    let b = &mut out.layers[layer].bias;
    let std = noise_std(b, scale);
    for v in b.iter_mut() {
        *v += std * rng.normal();
    }
    Ok(out)
}

/// Resizes the first hidden layer. Architectures without hidden layers are
/// returned unchanged.
pub fn apply_fc_layer_mod(config: &ModelConfig, width_delta: i64) -> Result<ModelConfig> {
    let mut out = config.clone();
    if let Some(first) = out.hidden_layers.first_mut() {
        let width = *first as i64 + width_delta;
        if width < 1 {
            return Err(Error::config(format!(
                "width delta {width_delta} would shrink the first hidden layer ({first}) below 1"
            )));
        }
        *first = width as usize;
    }
    Ok(out)
}

/// Replaces the shuffle seed and the initialization seed.
pub fn apply_seed_override(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    new_seed: u64,
) -> (ModelConfig, TrainConfig) {
    let mut mc = model_config.clone();
    let mut tc = train_config.clone();
    mc.init_seed = new_seed;
    tc.shuffle_seed = new_seed;
    (mc, tc)
}
