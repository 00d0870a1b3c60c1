//! Perturbation factors, pools of strategies, and strategy application.
//!
//! A [`PerturbationPool`] lists `K` factors, each with an ordered level set
//! whose first entry is the identity ("off") level. A
//! [`PerturbationStrategy`] picks one level per factor. [`perturb`] applies a
//! strategy in a fixed order:
//!
//! | stage         | factors (in order)                 | surface            |
//! |---------------|------------------------------------|--------------------|
//! | pre-training  | F2 out-of-distribution             | test inputs        |
//! |               | F3 label flipping, F4 label noise  | training labels    |
//! |               | F8 FC-layer width, F10 seed        | model/train config |
//! | post-training | F5 weights, F6 biases              | trained parameters |
//! |               | F1 adversarial (FGSM)              | test inputs        |
//!
//! F1 runs last so its gradient is taken on the model actually evaluated.

mod factors;
mod robustness;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use factors::{
    apply_bias_mod, apply_fc_layer_mod, apply_fgsm, apply_label_flip, apply_label_noise, apply_ood, apply_ood_shift,
    apply_seed_override, apply_weight_mod, OodShift, TauMatrix,
};
pub use robustness::{
    check_robustness_conditions, OutputCheck, PNorm, RobustnessQuery, RobustnessVerdict, SampleVerdict,
};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::net::{Matrix, ModelConfig, Parameters, TrainConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    #[serde(alias = "F1")]
    AdversarialAttack,
    #[serde(alias = "F2")]
    OutOfDistribution,
    #[serde(alias = "F3")]
    LabelFlipping,
    #[serde(alias = "F4")]
    LabelNoise,
    #[serde(alias = "F5")]
    WeightModification,
    #[serde(alias = "F6")]
    BiasModification,
    #[serde(alias = "F8")]
    FcLayerModification,
    #[serde(alias = "F10")]
    SeedOverride,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Inputs,
    Labels,
    Configuration,
}

impl FactorKind {
    pub const ALL: [FactorKind; 8] = [
        FactorKind::AdversarialAttack,
        FactorKind::OutOfDistribution,
        FactorKind::LabelFlipping,
        FactorKind::LabelNoise,
        FactorKind::WeightModification,
        FactorKind::BiasModification,
        FactorKind::FcLayerModification,
        FactorKind::SeedOverride,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FactorKind::AdversarialAttack => "F1",
            FactorKind::OutOfDistribution => "F2",
            FactorKind::LabelFlipping => "F3",
            FactorKind::LabelNoise => "F4",
            FactorKind::WeightModification => "F5",
            FactorKind::BiasModification => "F6",
            FactorKind::FcLayerModification => "F8",
            FactorKind::SeedOverride => "F10",
        }
    }

    pub fn surface(self) -> Surface {
        match self {
            FactorKind::AdversarialAttack | FactorKind::OutOfDistribution => Surface::Inputs,
            FactorKind::LabelFlipping | FactorKind::LabelNoise => Surface::Labels,
            _ => Surface::Configuration,
        }
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FactorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        FactorKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .or_else(|| serde_json::from_value(Value::String(s.to_owned())).ok())
            .ok_or_else(|| Error::config(format!("unknown factor `{s}`")))
    }
}

/// The parameter carried by one level of a factor.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelParam {
    /// F1 attack strength (infinity-norm radius).
    Sigma(f64),
    /// F2 shift magnitude.
    Shift(f64),
    /// F3 flip rate, expanded to a uniform off-diagonal tau.
    FlipRate(f64),
    /// F3 explicit transition matrix.
    FlipTau(TauMatrix),
    /// F4 noise rate.
    NoiseRate(f64),
    /// F5 noise scale.
    WeightScale(f64),
    /// F6 noise scale.
    BiasScale(f64),
    /// F8 change in first hidden-layer width.
    WidthDelta(i64),
    /// F10 replacement seed; `None` keeps the configured seeds.
    Seed(Option<u64>),
}

impl LevelParam {
    pub fn kind(&self) -> FactorKind {
        match self {
            LevelParam::Sigma(_) => FactorKind::AdversarialAttack,
            LevelParam::Shift(_) => FactorKind::OutOfDistribution,
            LevelParam::FlipRate(_) | LevelParam::FlipTau(_) => FactorKind::LabelFlipping,
            LevelParam::NoiseRate(_) => FactorKind::LabelNoise,
            LevelParam::WeightScale(_) => FactorKind::WeightModification,
            LevelParam::BiasScale(_) => FactorKind::BiasModification,
            LevelParam::WidthDelta(_) => FactorKind::FcLayerModification,
            LevelParam::Seed(_) => FactorKind::SeedOverride,
        }
    }

    /// Whether applying this level is the identity.
    pub fn is_off(&self) -> bool {
        match self {
            LevelParam::Sigma(v)
            | LevelParam::Shift(v)
            | LevelParam::FlipRate(v)
            | LevelParam::NoiseRate(v)
            | LevelParam::WeightScale(v)
            | LevelParam::BiasScale(v) => *v == 0.0,
            LevelParam::FlipTau(t) => t.is_identity(),
            LevelParam::WidthDelta(d) => *d == 0,
            LevelParam::Seed(s) => s.is_none(),
        }
    }

    fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, max: Option<f64>| -> Result<()> {
            let ok = v.is_finite() && v >= 0.0 && max.is_none_or(|m| v <= m);
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("{name} {v} out of bounds")))
            }
        };
        match self {
            LevelParam::Sigma(v) => check("sigma", *v, None),
            LevelParam::Shift(v) => check("shift magnitude", *v, None),
            LevelParam::FlipRate(v) => check("flip rate", *v, Some(1.0)),
            LevelParam::NoiseRate(v) => check("noise rate", *v, Some(1.0)),
            LevelParam::WeightScale(v) => check("weight scale", *v, None),
            LevelParam::BiasScale(v) => check("bias scale", *v, None),
            LevelParam::FlipTau(_) | LevelParam::WidthDelta(_) | LevelParam::Seed(_) => Ok(()),
        }
    }

    /// Parses the JSON form used in pool definitions.
    pub fn from_json(kind: FactorKind, v: &Value) -> Result<Self> {
        let num = || {
            v.as_f64()
                .ok_or_else(|| Error::config(format!("{kind} level must be a number, got {v}")))
        };
        let param = match kind {
            FactorKind::AdversarialAttack => LevelParam::Sigma(num()?),
            FactorKind::OutOfDistribution => LevelParam::Shift(num()?),
            FactorKind::LabelFlipping => match v {
                Value::Array(_) => LevelParam::FlipTau(
                    serde_json::from_value(v.clone()).map_err(|e| Error::config(format!("{kind} tau level: {e}")))?,
                ),
                _ => LevelParam::FlipRate(num()?),
            },
            FactorKind::LabelNoise => LevelParam::NoiseRate(num()?),
            FactorKind::WeightModification => LevelParam::WeightScale(num()?),
            FactorKind::BiasModification => LevelParam::BiasScale(num()?),
            FactorKind::FcLayerModification => LevelParam::WidthDelta(
                v.as_i64()
                    .ok_or_else(|| Error::config(format!("{kind} level must be an integer, got {v}")))?,
            ),
            FactorKind::SeedOverride => LevelParam::Seed(match v {
                Value::Null => None,
                _ => Some(v.as_u64().ok_or_else(|| {
                    Error::config(format!("{kind} level must be null or an unsigned integer, got {v}"))
                })?),
            }),
        };
        param.validate()?;
        Ok(param)
    }

    pub fn to_json(&self) -> Value {
        match self {
            LevelParam::Sigma(v)
            | LevelParam::Shift(v)
            | LevelParam::FlipRate(v)
            | LevelParam::NoiseRate(v)
            | LevelParam::WeightScale(v)
            | LevelParam::BiasScale(v) => Value::from(*v),
            LevelParam::FlipTau(t) => serde_json::to_value(t).expect("tau serializes"),
            LevelParam::WidthDelta(d) => Value::from(*d),
            LevelParam::Seed(s) => s.map_or(Value::Null, Value::from),
        }
    }
}

impl fmt::Display for LevelParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

/// One factor of a pool and its level set `T_F`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub levels: Vec<LevelParam>,
}

/// Serialized pool entry: `{"factor": "F1", "levels": [0.0, 0.003]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub factor: FactorKind,
    pub levels: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FactorSpec>", into = "Vec<FactorSpec>")]
pub struct PerturbationPool {
    factors: Vec<Factor>,
}

impl PerturbationPool {
    /// Every level set must be non-empty, start with its off level and
    /// contain no other off level; factor kinds must be unique.
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::config("a perturbation pool needs at least one factor"));
        }
        let mut seen = Vec::new();
        for f in &factors {
            if seen.contains(&f.kind) {
                return Err(Error::config(format!("factor {} listed twice", f.kind)));
            }
            seen.push(f.kind);
            if f.levels.is_empty() {
                return Err(Error::config(format!("factor {} has no levels", f.kind)));
            }
            for (i, level) in f.levels.iter().enumerate() {
                if level.kind() != f.kind {
                    return Err(Error::config(format!(
                        "level {i} of factor {} is a {} parameter",
                        f.kind,
                        level.kind()
                    )));
                }
                level.validate()?;
                match (i, level.is_off()) {
                    (0, false) => {
                        return Err(Error::config(format!(
                            "level 0 of factor {} must be the off level",
                            f.kind
                        )))
                    }
                    (1.., true) => {
                        return Err(Error::config(format!(
                            "factor {} has a second off level at index {i}",
                            f.kind
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { factors })
    }

    pub fn from_specs(specs: &[FactorSpec]) -> Result<Self> {
        let factors = specs
            .iter()
            .map(|s| {
                let levels = s
                    .levels
                    .iter()
                    .map(|v| LevelParam::from_json(s.factor, v))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Factor { kind: s.factor, levels })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    pub fn to_specs(&self) -> Vec<FactorSpec> {
        self.factors
            .iter()
            .map(|f| FactorSpec {
                factor: f.kind,
                levels: f.levels.iter().map(LevelParam::to_json).collect(),
            })
            .collect()
    }

    /// Checks levels that depend on the model or the label space: FC-layer
    /// deltas must keep the first hidden width at least 1, explicit tau
    /// matrices must be `num_classes × num_classes`.
    pub fn validate_for(&self, model: &ModelConfig, num_classes: usize) -> Result<()> {
        for f in &self.factors {
            for level in &f.levels {
                match level {
                    LevelParam::WidthDelta(d) => {
                        apply_fc_layer_mod(model, *d)?;
                    }
                    LevelParam::FlipTau(t) if t.num_classes() != num_classes => {
                        return Err(Error::config(format!(
                            "tau matrix is {0}x{0} but the data has {num_classes} classes",
                            t.num_classes()
                        )));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Number of factors `K`.
    pub fn k(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.levels.len()).collect()
    }

    pub fn position(&self, kind: FactorKind) -> Option<usize> {
        self.factors.iter().position(|f| f.kind == kind)
    }

    /// `∏ |T_F|`, the number of strategies.
    pub fn size(&self) -> u64 {
        self.factors
            .iter()
            .try_fold(1u64, |acc, f| acc.checked_mul(f.levels.len() as u64))
            .unwrap_or(u64::MAX)
    }

    pub fn all_off(&self) -> PerturbationStrategy {
        PerturbationStrategy {
            indices: vec![0; self.k()],
        }
    }

    /// Strategy at position `index` of the enumeration (first factor most
    /// significant, so enumeration order is canonical order).
    pub fn strategy_at(&self, mut index: u64) -> PerturbationStrategy {
        let mut indices = vec![0; self.k()];
        for (slot, f) in indices.iter_mut().zip(&self.factors).rev() {
            let n = f.levels.len() as u64;
            *slot = (index % n) as usize;
            index /= n;
        }
        PerturbationStrategy { indices }
    }

    pub fn index_of(&self, ps: &PerturbationStrategy) -> u64 {
        ps.indices
            .iter()
            .zip(&self.factors)
            .fold(0u64, |acc, (&i, f)| acc * f.levels.len() as u64 + i as u64)
    }

    pub fn iter(&self) -> impl Iterator<Item = PerturbationStrategy> + '_ {
        (0..self.size()).map(|i| self.strategy_at(i))
    }

    pub fn contains(&self, ps: &PerturbationStrategy) -> bool {
        ps.indices.len() == self.k() && ps.indices.iter().zip(&self.factors).all(|(&i, f)| i < f.levels.len())
    }

    pub fn check(&self, ps: &PerturbationStrategy) -> Result<()> {
        if self.contains(ps) {
            Ok(())
        } else {
            Err(Error::config(format!("strategy {ps} is not a member of the pool")))
        }
    }

    /// Parses a canonical encoding and checks membership.
    pub fn parse_strategy(&self, encoding: &str) -> Result<PerturbationStrategy> {
        let ps: PerturbationStrategy = encoding.parse()?;
        self.check(&ps)?;
        Ok(ps)
    }

    /// The level `ps` selects for factor `i`.
    pub fn level(&self, ps: &PerturbationStrategy, i: usize) -> &LevelParam {
        &self.factors[i].levels[ps.indices[i]]
    }

    /// The strategy with only factor `i` set to `level`.
    pub fn single(&self, i: usize, level: usize) -> PerturbationStrategy {
        let mut ps = self.all_off();
        ps.indices[i] = level;
        ps
    }

    /// Human-readable description, e.g. `F1=0.003, F5=0.5`.
    pub fn describe(&self, ps: &PerturbationStrategy) -> String {
        let on: Vec<String> = (0..self.k())
            .filter(|&i| ps.indices[i] != 0)
            .map(|i| format!("{}={}", self.factors[i].kind, self.level(ps, i)))
            .collect();
        if on.is_empty() {
            "none".into()
        } else {
            on.join(", ")
        }
    }
}

impl TryFrom<Vec<FactorSpec>> for PerturbationPool {
    type Error = Error;

    fn try_from(specs: Vec<FactorSpec>) -> Result<Self> {
        Self::from_specs(&specs)
    }
}

impl From<PerturbationPool> for Vec<FactorSpec> {
    fn from(p: PerturbationPool) -> Self {
        p.to_specs()
    }
}

/// A level index per pool factor. Ordering is lexicographic on the index
/// vector; this is the canonical order used for every tie-break.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PerturbationStrategy {
    indices: Vec<usize>,
}

impl PerturbationStrategy {
    pub fn from_indices(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub(crate) fn indices_mut(&mut self) -> &mut [usize] {
        &mut self.indices
    }

    /// Canonical encoding: level indices joined by `-`, e.g. `2-0-1`.
    pub fn encoding(&self) -> String {
        self.indices.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    }

    pub fn is_all_off(&self) -> bool {
        self.indices.iter().all(|&i| i == 0)
    }
}

impl fmt::Display for PerturbationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encoding())
    }
}

impl FromStr for PerturbationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let indices = s
            .trim()
            .split('-')
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::config(format!("`{s}` is not a strategy encoding")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { indices })
    }
}

impl TryFrom<String> for PerturbationStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PerturbationStrategy> for String {
    fn from(ps: PerturbationStrategy) -> Self {
        ps.encoding()
    }
}

/// Seed for a stochastic factor. It depends only on the master seed and the
/// factor, so every level and every strategy shares one noise draw per factor.
pub fn factor_seed(master_seed: u64, kind: FactorKind) -> u64 {
    derive_seed(master_seed, kind.code())
}

/// Modifications applied after training.
#[derive(Debug, Clone, PartialEq)]
pub enum PostHoc {
    WeightNoise { scale: f64, seed: u64 },
    BiasNoise { scale: f64, seed: u64 },
    Fgsm { sigma: f64 },
}

/// Result of the pre-training stage of [`perturb`], plus the post-training
/// modifiers still to be applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedBundle {
    pub test_x: Matrix,
    pub train_y: Vec<usize>,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    /// In application order: weight noise, bias noise, then FGSM.
    pub post_hoc: Vec<PostHoc>,
}

impl PerturbedBundle {
    /// Applies the parameter modifiers (F5, F6) to a trained model.
    pub fn modify_model(&self, params: &Parameters) -> Result<Parameters> {
        let mut out = params.clone();
        for step in &self.post_hoc {
            match *step {
                PostHoc::WeightNoise { scale, seed } => out = apply_weight_mod(&out, scale, seed)?,
                PostHoc::BiasNoise { scale, seed } => out = apply_bias_mod(&out, scale, seed)?,
                PostHoc::Fgsm { .. } => {}
            }
        }
        Ok(out)
    }

    /// Applies F1 to the (already shifted) test inputs against `model`.
    pub fn attack_inputs(&self, model: &Parameters, labels: &[usize], ranges: &[(f64, f64)]) -> Result<Matrix> {
        let mut x = self.test_x.clone();
        for step in &self.post_hoc {
            if let PostHoc::Fgsm { sigma } = *step {
                x = apply_fgsm(model, &x, labels, sigma, Some(ranges))?;
            }
        }
        Ok(x)
    }
}

/// Applies the pre-training stage of `ps` and schedules the post-training
/// modifiers. Off levels are skipped, so the all-off strategy returns the
/// inputs unchanged with no modifiers.
pub fn perturb(
    pool: &PerturbationPool,
    ps: &PerturbationStrategy,
    split: &SplitDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    master_seed: u64,
) -> Result<PerturbedBundle> {
    pool.check(ps)?;
    let mut bundle = PerturbedBundle {
        test_x: split.test.features().clone(),
        train_y: split.train.labels().to_vec(),
        model_config: model_config.clone(),
        train_config: train_config.clone(),
        post_hoc: Vec::new(),
    };
    let num_classes = split.train.num_classes();
    let level_of = |kind: FactorKind| pool.position(kind).map(|i| pool.level(ps, i)).filter(|l| !l.is_off());
    let seed_of = |kind: FactorKind| factor_seed(master_seed, kind);

    if let Some(LevelParam::Shift(m)) = level_of(FactorKind::OutOfDistribution) {
        bundle.test_x = apply_ood_shift(&bundle.test_x, *m, seed_of(FactorKind::OutOfDistribution))?;
    }
    match level_of(FactorKind::LabelFlipping) {
        Some(LevelParam::FlipRate(rate)) => {
            let tau = TauMatrix::uniform(num_classes, *rate)?;
            bundle.train_y = apply_label_flip(&bundle.train_y, &tau, seed_of(FactorKind::LabelFlipping))?;
        }
        Some(LevelParam::FlipTau(tau)) => {
            bundle.train_y = apply_label_flip(&bundle.train_y, tau, seed_of(FactorKind::LabelFlipping))?;
        }
        _ => {}
    }
    if let Some(LevelParam::NoiseRate(rate)) = level_of(FactorKind::LabelNoise) {
        bundle.train_y = apply_label_noise(&bundle.train_y, num_classes, *rate, seed_of(FactorKind::LabelNoise))?;
    }
    if let Some(LevelParam::WidthDelta(d)) = level_of(FactorKind::FcLayerModification) {
        bundle.model_config = apply_fc_layer_mod(&bundle.model_config, *d)?;
    }
    if let Some(LevelParam::Seed(Some(seed))) = level_of(FactorKind::SeedOverride) {
        (bundle.model_config, bundle.train_config) =
            apply_seed_override(&bundle.model_config, &bundle.train_config, *seed);
    }

    if let Some(LevelParam::WeightScale(scale)) = level_of(FactorKind::WeightModification) {
        bundle.post_hoc.push(PostHoc::WeightNoise {
            scale: *scale,
            seed: seed_of(FactorKind::WeightModification),
        });
    }
    if let Some(LevelParam::BiasScale(scale)) = level_of(FactorKind::BiasModification) {
        bundle.post_hoc.push(PostHoc::BiasNoise {
            scale: *scale,
            seed: seed_of(FactorKind::BiasModification),
        });
    }
    if let Some(LevelParam::Sigma(sigma)) = level_of(FactorKind::AdversarialAttack) {
        bundle.post_hoc.push(PostHoc::Fgsm { sigma: *sigma });
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests;
