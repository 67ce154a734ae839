use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{featurize, FeatureError, FeatureVector, FEATURE_DIM, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("params use feature schema {found}, featurizer is {expected}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("params have {found} weights, schema needs {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("params contain non-finite values")]
    NonFinite,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid params file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pointwise,
    Pairwise,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub converged: bool,
    pub examples: usize,
}

/// Linear reward model `w·φ(post, subject) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModelParams {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub metadata: TrainingMetadata,
}

/// Anything that can score a subject line for a post. Higher is more engaging.
pub trait RewardScorer: Send + Sync {
    fn score(&self, post: &str, subject: &str) -> Result<f64, ModelError>;
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl RewardModelParams {
    pub fn zeros(kind: ModelKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind,
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
            metadata: TrainingMetadata::default(),
        }
    }

    pub fn check_schema(&self) -> Result<(), ModelError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ModelError::SchemaMismatch {
                expected: SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if self.weights.len() != FEATURE_DIM {
            return Err(ModelError::DimensionMismatch {
                expected: FEATURE_DIM,
                found: self.weights.len(),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.check_schema()?;
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(())
    }

    pub fn score_features(&self, features: &FeatureVector) -> f64 {
        features.dot(&self.weights) + self.bias
    }

    /// Compact JSON; `from_json(to_json(p)) == p` bit for bit.
    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let params: Self = serde_json::from_str(s)?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = self.to_json()?;
        // Write-then-rename so readers never see a partial file.
        let tmp = path.with_extension("tmp");
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::write(&tmp, json).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }
}

impl RewardScorer for RewardModelParams {
    fn score(&self, post: &str, subject: &str) -> Result<f64, ModelError> {
        self.check_schema()?;
        Ok(self.score_features(&featurize(post, subject)?))
    }
}

impl<T: RewardScorer + ?Sized> RewardScorer for std::sync::Arc<T> {
    fn score(&self, post: &str, subject: &str) -> Result<f64, ModelError> {
        (**self).score(post, subject)
    }
}

/// Bradley–Terry probability that `a` is preferred over `b`.
pub fn prob_prefers(scorer: &dyn RewardScorer, post: &str, a: &str, b: &str) -> Result<f64, ModelError> {
    Ok(sigmoid(scorer.score(post, a)? - scorer.score(post, b)?))
}

/// Pointwise "engaging" probability of a subject line.
pub fn engagement_probability(scorer: &dyn RewardScorer, post: &str, subject: &str) -> Result<f64, ModelError> {
    Ok(sigmoid(scorer.score(post, subject)?))
}
