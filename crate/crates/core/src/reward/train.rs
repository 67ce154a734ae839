//! Maximum-likelihood fitting of the linear reward model.
//!
//! Both objectives are convex: L2-regularized logistic loss for the pointwise
//! model and the negative Bradley–Terry log-likelihood for the pairwise model.
//! They are minimized by full-batch gradient descent with a fixed step,
//! stopping once the gradient norm falls under `grad_tol`. Losses are averaged
//! over examples, so `l2` is relative to a single example.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{featurize, FeatureError, FeatureVector, FEATURE_DIM, SCHEMA_VERSION};
use super::model::{sigmoid, softplus, ModelKind, RewardModelParams, TrainingMetadata};
use crate::pipeline::{PointwiseExample, PointwiseLabel, PreferencePair};
use crate::templates::TemplateError;

const INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Pointwise only; the pairwise likelihood does not depend on the bias.
    pub fit_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2: 1e-4,
            max_epochs: 200,
            grad_tol: 1e-6,
            seed: 0,
            fit_bias: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {epoch}")]
    NumericalError { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(TrainError::Config("l2 must be non-negative".into()));
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return Err(TrainError::Config("grad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Row-compressed design matrix over the full feature dimension.
#[derive(Debug, Clone, Default)]
struct SparseRows {
    indices: Vec<u32>,
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl SparseRows {
    fn from_features<'a>(rows: impl IntoIterator<Item = &'a FeatureVector>) -> Self {
        let mut m = SparseRows {
            offsets: vec![0],
            ..Default::default()
        };
        for f in rows {
            for (i, v) in f.nonzeros() {
                m.indices.push(i as u32);
                m.values.push(v);
            }
            m.offsets.push(m.indices.len());
        }
        m
    }

    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .map(|i| *i as usize)
            .zip(self.values[span].iter().copied())
    }

    fn dot(&self, r: usize, w: &[f64]) -> f64 {
        self.row(r).map(|(i, v)| w[i] * v).sum()
    }

    fn active(&self) -> BTreeSet<usize> {
        self.indices.iter().map(|i| *i as usize).collect()
    }
}

fn l2_penalty(w: &[f64], l2: f64) -> f64 {
    if l2 == 0.0 {
        0.0
    } else {
        l2 * w.iter().map(|x| x * x).sum::<f64>()
    }
}

/// A differentiable training objective. `loss_grad` overwrites `grad_w` and
/// returns `(loss, d loss / d bias)`.
trait Objective {
    fn loss_grad(&self, w: &[f64], bias: f64, grad_w: &mut [f64]) -> (f64, f64);
    fn rows(&self) -> &SparseRows;
}

struct PointwiseObjective {
    rows: SparseRows,
    labels: Vec<f64>,
    l2: f64,
}

impl Objective for PointwiseObjective {
    fn loss_grad(&self, w: &[f64], bias: f64, grad_w: &mut [f64]) -> (f64, f64) {
        grad_w.fill(0.0);
        let n = self.rows.len() as f64;
        let mut loss = 0.0;
        let mut grad_b = 0.0;
        for (r, y) in self.labels.iter().enumerate() {
            let z = self.rows.dot(r, w) + bias;
            loss += softplus(z) - y * z;
            let residual = sigmoid(z) - y;
            grad_b += residual;
            for (i, v) in self.rows.row(r) {
                grad_w[i] += residual * v;
            }
        }
        for (g, wi) in grad_w.iter_mut().zip(w) {
            *g = *g / n + 2.0 * self.l2 * wi;
        }
        (loss / n + l2_penalty(w, self.l2), grad_b / n)
    }

    fn rows(&self) -> &SparseRows {
        &self.rows
    }
}

struct PairwiseObjective {
    rows: SparseRows,
    l2: f64,
}

impl Objective for PairwiseObjective {
    fn loss_grad(&self, w: &[f64], _bias: f64, grad_w: &mut [f64]) -> (f64, f64) {
        grad_w.fill(0.0);
        let n = self.rows.len() as f64;
        let mut loss = 0.0;
        for r in 0..self.rows.len() {
            let margin = self.rows.dot(r, w);
            loss += softplus(-margin);
            let coef = -sigmoid(-margin);
            for (i, v) in self.rows.row(r) {
                grad_w[i] += coef * v;
            }
        }
        for (g, wi) in grad_w.iter_mut().zip(w) {
            *g = *g / n + 2.0 * self.l2 * wi;
        }
        (loss / n + l2_penalty(w, self.l2), 0.0)
    }

    fn rows(&self) -> &SparseRows {
        &self.rows
    }
}

/// Mean pointwise loss and its gradient at `(w, bias)`. Exposed for
/// gradient checking.
pub fn pointwise_loss_grad(examples: &[(FeatureVector, bool)], w: &[f64], bias: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let obj = PointwiseObjective {
        rows: SparseRows::from_features(examples.iter().map(|(f, _)| f)),
        labels: examples.iter().map(|(_, y)| if *y { 1.0 } else { 0.0 }).collect(),
        l2,
    };
    let mut grad = vec![0.0; w.len()];
    let (loss, gb) = obj.loss_grad(w, bias, &mut grad);
    (loss, grad, gb)
}

/// Mean Bradley–Terry loss over winner-minus-loser differences, and its gradient.
pub fn pairwise_loss_grad(diffs: &[FeatureVector], w: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let obj = PairwiseObjective {
        rows: SparseRows::from_features(diffs),
        l2,
    };
    let mut grad = vec![0.0; w.len()];
    let (loss, _) = obj.loss_grad(w, 0.0, &mut grad);
    (loss, grad)
}

fn descend(
    obj: &dyn Objective,
    config: &TrainConfig,
    fit_bias: bool,
    kind: ModelKind,
) -> Result<RewardModelParams, TrainError> {
    config.validate()?;
    let n = obj.rows().len();
    if n == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = vec![0.0; FEATURE_DIM];
    for i in obj.rows().active() {
        w[i] = rng.gen_range(-INIT_SCALE..INIT_SCALE);
    }
    let mut bias = 0.0;
    let mut grad = vec![0.0; FEATURE_DIM];

    let (mut loss, mut grad_b) = obj.loss_grad(&w, bias, &mut grad);
    let initial_loss = loss;
    let mut epochs = 0;
    let mut converged = false;
    loop {
        if !loss.is_finite() {
            return Err(TrainError::NumericalError { epoch: epochs });
        }
        let gb = if fit_bias { grad_b } else { 0.0 };
        let norm = (grad.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < config.grad_tol {
            converged = true;
            break;
        }
        if epochs == config.max_epochs {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= config.learning_rate * g;
        }
        bias -= config.learning_rate * gb;
        (loss, grad_b) = obj.loss_grad(&w, bias, &mut grad);
        epochs += 1;
    }
    if w.iter().any(|x| !x.is_finite()) || !bias.is_finite() {
        return Err(TrainError::NumericalError { epoch: epochs });
    }

    Ok(RewardModelParams {
        schema_version: SCHEMA_VERSION,
        kind,
        weights: w,
        bias,
        metadata: TrainingMetadata {
            seed: config.seed,
            epochs,
            initial_loss,
            final_loss: loss,
            converged,
            examples: n,
        },
    })
}

/// Fits the pointwise model on featurized `(features, is_yes)` examples.
pub fn fit_pointwise(
    examples: &[(FeatureVector, bool)],
    config: &TrainConfig,
) -> Result<RewardModelParams, TrainError> {
    let obj = PointwiseObjective {
        rows: SparseRows::from_features(examples.iter().map(|(f, _)| f)),
        labels: examples.iter().map(|(_, y)| if *y { 1.0 } else { 0.0 }).collect(),
        l2: config.l2,
    };
    descend(&obj, config, config.fit_bias, ModelKind::Pointwise)
}

/// Fits the pairwise model on winner-minus-loser feature differences.
pub fn fit_pairwise(diffs: &[FeatureVector], config: &TrainConfig) -> Result<RewardModelParams, TrainError> {
    let obj = PairwiseObjective {
        rows: SparseRows::from_features(diffs),
        l2: config.l2,
    };
    descend(&obj, config, false, ModelKind::Pairwise)
}

pub fn train_pointwise(examples: &[PointwiseExample], config: &TrainConfig) -> Result<RewardModelParams, TrainError> {
    let featurized = examples
        .iter()
        .map(|ex| {
            let (post, subject) = ex.fields()?;
            Ok((featurize(&post, &subject)?, ex.target == PointwiseLabel::Yes))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    fit_pointwise(&featurized, config)
}

pub fn pair_difference(pair: &PreferencePair) -> Result<FeatureVector, FeatureError> {
    let winner = featurize(&pair.post_text, &pair.winner.text)?;
    let loser = featurize(&pair.post_text, &pair.loser.text)?;
    Ok(winner.difference(&loser))
}

pub fn train_pairwise(pairs: &[PreferencePair], config: &TrainConfig) -> Result<RewardModelParams, TrainError> {
    let diffs = pairs.iter().map(pair_difference).collect::<Result<Vec<_>, _>>()?;
    fit_pairwise(&diffs, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::features::Dense;

    fn unit(slot: Dense, value: f64) -> FeatureVector {
        let mut f = FeatureVector::default();
        f.dense[slot as usize] = value;
        f
    }

    fn toy_config() -> TrainConfig {
        TrainConfig {
            learning_rate: 1.0,
            l2: 0.0,
            max_epochs: 20_000,
            grad_tol: 1e-10,
            seed: 7,
            fit_bias: false,
        }
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(
            fit_pairwise(&[], &TrainConfig::default()),
            Err(TrainError::EmptyTrainingSet)
        ));
        assert!(matches!(
            fit_pointwise(&[], &TrainConfig::default()),
            Err(TrainError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn identical_pairs_give_zero_weights() {
        let f = featurize("post", "Same subject").unwrap();
        let diffs = vec![f.difference(&f); 5];
        let p = fit_pairwise(&diffs, &TrainConfig::default()).unwrap();
        assert!(p.weights.iter().all(|w| *w == 0.0));
        assert!(p.metadata.converged);
    }

    #[test]
    fn conflicting_labels_balance_out() {
        let f = unit(Dense::Greeting, 1.0);
        let examples = vec![(f.clone(), true), (f.clone(), false), (f.clone(), true), (f, false)];
        let p = fit_pointwise(&examples, &toy_config()).unwrap();
        assert!(p.weights[Dense::Greeting as usize].abs() < 1e-6);
    }

    #[test]
    fn loss_never_increases_under_defaults() {
        let diffs: Vec<FeatureVector> = ["Lost dog!", "CRIME ALERT tonight", "hello.", "Free mulch available"]
            .iter()
            .zip(["Hello.", "crime alert", "Found my keys", "mulch"])
            .map(|(a, b)| featurize("post", a).unwrap().difference(&featurize("post", b).unwrap()))
            .collect();
        let p = fit_pairwise(&diffs, &TrainConfig::default()).unwrap();
        assert!(p.metadata.final_loss <= p.metadata.initial_loss);
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            fit_pairwise(&[FeatureVector::default()], &bad),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let diffs = vec![unit(Dense::WordCount, 1e200), unit(Dense::WordCount, -1e200)];
        let cfg = TrainConfig {
            learning_rate: 1e200,
            ..Default::default()
        };
        assert!(matches!(
            fit_pairwise(&diffs, &cfg),
            Err(TrainError::NumericalError { .. })
        ));
    }
}
