//! Linear reward models over text features: scoring, Bradley–Terry
//! preferences, maximum-likelihood training, evaluation and tournament
//! ranking.

pub mod eval;
pub mod features;
pub mod handle;
pub mod model;
pub mod train;

pub use eval::{
    classification_report, evaluate_accuracy, rank_tournament, ClassificationReport, EvalError, TournamentResult,
};
pub use features::{featurize, FeatureError, FeatureVector, FEATURE_DIM, SCHEMA_VERSION};
pub use handle::{FixedScorer, ParamsHandle, ScorerSource};
pub use model::{
    engagement_probability, prob_prefers, sigmoid, ModelError, ModelKind, RewardModelParams, RewardScorer,
};
pub use train::{fit_pairwise, fit_pointwise, train_pairwise, train_pointwise, TrainConfig, TrainError};
