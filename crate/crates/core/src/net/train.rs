use serde::{Deserialize, Serialize};

use super::{backward, init_parameters, Matrix, ModelConfig, Parameters};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Mini-batch SGD settings. `shuffle_seed` drives per-epoch shuffling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawTrainConfig")]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub shuffle_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrainConfig {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    #[serde(default)]
    shuffle_seed: u64,
}

impl TryFrom<RawTrainConfig> for TrainConfig {
    type Error = Error;

    fn try_from(r: RawTrainConfig) -> Result<Self> {
        TrainConfig::new(r.epochs, r.batch_size, r.learning_rate, r.shuffle_seed)
    }
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, shuffle_seed: u64) -> Result<Self> {
        let cfg = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            shuffle_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning_rate must be a positive finite number, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Trains a freshly initialized network with mini-batch SGD.
///
/// Each epoch visits the samples in a Fisher–Yates order drawn from a child
/// generator of `(shuffle_seed, epoch)`; the result is a pure function of the
/// arguments.
pub fn train(x: &Matrix, y: &[usize], model_config: &ModelConfig, train_config: &TrainConfig) -> Result<Parameters> {
    train_config.validate()?;
    if x.rows() != y.len() {
        return Err(Error::shape(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if train_config.batch_size > x.rows() {
        return Err(Error::config(format!(
            "batch_size {} exceeds the {} training samples",
            train_config.batch_size,
            x.rows()
        )));
    }
    let mut params = init_parameters(model_config)?;
    let shuffle_root = Rng::new(train_config.shuffle_seed);
    let lr = train_config.learning_rate;
    let mut order: Vec<usize> = (0..x.rows()).collect();

    for epoch in 0..train_config.epochs {
        order.sort_unstable();
        shuffle_root.child(&format!("epoch/{epoch}")).shuffle(&mut order);
        for batch in order.chunks(train_config.batch_size) {
            let xb = x.select_rows(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let grads = backward(&params, &xb, &yb)?;
            if !grads.loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for (layer, g) in params.layers.iter_mut().zip(&grads.params.layers) {
                for (w, gw) in layer.weight.data_mut().iter_mut().zip(g.weight.data()) {
                    *w -= lr * gw;
                }
                for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                    *b -= lr * gb;
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::Divergence { epoch });
        }
    }
    Ok(params)
}
