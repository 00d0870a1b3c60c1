use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Posterior variances below this (in standardized units) are treated as 0,
/// so a noiseless fit interpolates its own observations exactly.
const VARIANCE_FLOOR: f64 = 1e-9;
const JITTER: f64 = 1e-10;

/// Zero-mean GP on standardized targets with a unit-variance squared
/// exponential kernel `exp(−‖a − b‖² / 2ℓ²)`.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    /// Row-major lower Cholesky factor of `K + (noise + jitter)·I`.
    chol: Vec<f64>,
    alpha: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    length_scale: f64,
}

fn kernel(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-d2 / (2.0 * length_scale * length_scale)).exp()
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d.is_nan() || d <= 0.0 {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L z = b` for lower-triangular `L`.
fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i * n + i];
    }
    z
}

/// Solves `Lᵀ z = b`.
fn backward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * z[k]).sum();
        z[i] = (b[i] - s) / l[i * n + i];
    }
    z
}

impl GaussianProcess {
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], length_scale: f64, noise: f64) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(Error::shape(format!(
                "GP fit needs matching non-empty inputs, got {n} points and {} targets",
                y.len()
            )));
        }
        if length_scale.is_nan() || length_scale <= 0.0 || noise.is_nan() || noise < 0.0 {
            return Err(Error::config("GP length_scale must be > 0 and noise >= 0"));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let z: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = kernel(&x[i], &x[j], length_scale);
            }
        }
        let mut jitter = JITTER;
        let chol = loop {
            let mut a = k.clone();
            for i in 0..n {
                a[i * n + i] += noise + jitter;
            }
            if let Some(l) = cholesky(&a, n) {
                break l;
            }
            jitter *= 10.0;
            if jitter > 1e-2 {
                return Err(Error::Domain("GP kernel matrix is not positive definite".into()));
            }
        };
        let alpha = backward_sub(&chol, n, &forward_sub(&chol, n, &z));
        Ok(GaussianProcess {
            x,
            chol,
            alpha,
            y_mean,
            y_scale,
            length_scale,
        })
    }

    /// Posterior mean and standard deviation of the latent function at `p`.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let ks: Vec<f64> = self.x.iter().map(|xi| kernel(xi, p, self.length_scale)).collect();
        let mean: f64 = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward_sub(&self.chol, n, &ks);
        let var = 1.0 - v.iter().map(|t| t * t).sum::<f64>();
        let sd = if var > VARIANCE_FLOOR { var.sqrt() } else { 0.0 };
        (self.y_mean + self.y_scale * mean, self.y_scale * sd)
    }
}

/// Expected improvement over `best` for maximization, with exploration
/// margin `xi`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64, xi: f64) -> f64 {
    let gain = mean - best - xi;
    if sd <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    let n = Normal::standard();
    (gain * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}
