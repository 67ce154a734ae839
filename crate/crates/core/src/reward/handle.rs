use std::sync::Arc;

use arc_swap::ArcSwap;

use super::model::{RewardModelParams, RewardScorer};

/// Source of the scorer to use for one selection. Implementations hand out a
/// complete snapshot; a selection scores all its candidates with it.
pub trait ScorerSource: Send + Sync {
    fn current(&self) -> Arc<dyn RewardScorer>;
}

/// Atomically swappable reward params. Readers take lock-free snapshots and
/// never observe a partially replaced model.
pub struct ParamsHandle {
    params: ArcSwap<RewardModelParams>,
}

impl ParamsHandle {
    pub fn new(params: RewardModelParams) -> Self {
        Self {
            params: ArcSwap::from_pointee(params),
        }
    }

    pub fn load(&self) -> Arc<RewardModelParams> {
        self.params.load_full()
    }

    /// Installs `params`, returning the previous ones.
    pub fn swap(&self, params: RewardModelParams) -> Arc<RewardModelParams> {
        self.params.swap(Arc::new(params))
    }
}

impl ScorerSource for ParamsHandle {
    fn current(&self) -> Arc<dyn RewardScorer> {
        self.load()
    }
}

/// A scorer that never changes.
pub struct FixedScorer(pub Arc<dyn RewardScorer>);

impl ScorerSource for FixedScorer {
    fn current(&self) -> Arc<dyn RewardScorer> {
        self.0.clone()
    }
}
