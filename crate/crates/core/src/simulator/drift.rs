use chrono::Days;
use serde::{Deserialize, Serialize};

use super::ab::start_day;
use super::corpus::{gen_corpus, vocabulary};
use super::pairs::{oracle_accuracy, sample_preference_pairs};
use super::user::{SyntheticUserModel, MIN_TEMPERATURE};
use super::SimError;
use crate::monitor::{run_day, MonitorBaseline, MonitorReport, DEFAULT_THRESHOLD};
use crate::reward::train::pair_difference;
use crate::reward::{evaluate_accuracy, sigmoid, train_pairwise, ParamsHandle, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub num_posts: usize,
    pub active_dims: usize,
    pub noise_temperature: f64,
    /// Training pairs before and after the shift.
    pub train_pairs: usize,
    /// Holdout pairs for the swap guard and baseline.
    pub holdout_pairs: usize,
    /// Fresh pairs checked each day.
    pub daily_pairs: usize,
    /// Stable days before the shift.
    pub days_before: u32,
    /// Pairs for the final held-out comparison against the oracle.
    pub eval_pairs: usize,
    pub threshold: f64,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            num_posts: 500,
            active_dims: 30,
            noise_temperature: 1.0,
            train_pairs: 20_000,
            holdout_pairs: 2_000,
            daily_pairs: 1_000,
            days_before: 3,
            eval_pairs: 10_000,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            train: TrainConfig {
                max_epochs: 2000,
                learning_rate: 0.5,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// Planted weight whose sign was flipped.
    pub flipped_dim: usize,
    pub flipped_weight: f64,
    pub initial_baseline: f64,
    /// One report per day; the shift happens before the last one.
    pub days: Vec<MonitorReport>,
    pub post_swap_accuracy: f64,
    pub new_oracle_accuracy: f64,
}

/// Planted weight whose sign flip costs the current comparator the most
/// expected accuracy on `pairs`.
fn most_influential_dim(
    user: &SyntheticUserModel,
    pairs: &[crate::pipeline::PreferencePair],
) -> Result<usize, SimError> {
    let tau = user.noise_temperature.max(MIN_TEMPERATURE);
    let active: Vec<usize> = (0..user.weights.len()).filter(|&j| user.weights[j] != 0.0).collect();
    let mut expected_acc = vec![0.0; active.len()];
    for p in pairs {
        let diff = pair_difference(p).map_err(crate::reward::ModelError::from)?;
        let margin = diff.dot(&user.weights);
        let side = if margin >= 0.0 { 1.0 } else { -1.0 };
        for (k, &j) in active.iter().enumerate() {
            let contrib: f64 = diff
                .nonzeros()
                .filter(|(i, _)| *i == j)
                .map(|(_, v)| v * user.weights[j])
                .sum();
            expected_acc[k] += sigmoid(side * (margin - 2.0 * contrib) / tau);
        }
    }
    let best = (0..active.len()).min_by(|&a, &b| expected_acc[a].total_cmp(&expected_acc[b]).then(a.cmp(&b)));
    Ok(best.map(|k| active[k]).unwrap_or_else(|| user.dominant_dim()))
}

/// Deploys a model trained under a planted preference, monitors it for a
/// few stable days, flips the sign of the most influential planted weight,
/// and lets the monitor detect the drop, retrain and swap.
pub fn run_drift_scenario(config: &DriftConfig) -> Result<DriftReport, SimError> {
    let posts = gen_corpus(config.num_posts, config.seed);
    let before =
        SyntheticUserModel::random_sparse(config.active_dims, &vocabulary(), config.noise_temperature, config.seed);
    let train_cfg = TrainConfig {
        seed: config.seed,
        ..config.train.clone()
    };
    let mut stream = config.seed.wrapping_mul(1000);
    let mut next_seed = || {
        stream += 1;
        stream
    };

    let train = sample_preference_pairs(&posts, &before, config.train_pairs, next_seed())?;
    let holdout = sample_preference_pairs(&posts, &before, config.holdout_pairs, next_seed())?;
    let deployed = train_pairwise(&train, &train_cfg)?;
    let initial_baseline = evaluate_accuracy(&deployed, &holdout)?;
    let handle = ParamsHandle::new(deployed);
    let mut baseline = MonitorBaseline::new(initial_baseline, start_day());

    let mut days = Vec::new();
    for d in 0..config.days_before {
        let day = start_day() + Days::new(d as u64 + 1);
        let fresh = sample_preference_pairs(&posts, &before, config.daily_pairs, next_seed())?;
        days.push(run_day(
            &handle,
            &fresh,
            &train,
            &holdout,
            &mut baseline,
            &train_cfg,
            day,
            config.threshold,
        )?);
    }

    let flipped_dim = most_influential_dim(&before, &train)?;
    let mut after = before.clone();
    after.weights[flipped_dim] = -after.weights[flipped_dim];

    let day = start_day() + Days::new(config.days_before as u64 + 1);
    let fresh = sample_preference_pairs(&posts, &after, config.daily_pairs, next_seed())?;
    let new_train = sample_preference_pairs(&posts, &after, config.train_pairs, next_seed())?;
    let new_holdout = sample_preference_pairs(&posts, &after, config.holdout_pairs, next_seed())?;
    days.push(run_day(
        &handle,
        &fresh,
        &new_train,
        &new_holdout,
        &mut baseline,
        &train_cfg,
        day,
        config.threshold,
    )?);

    let eval = sample_preference_pairs(&posts, &after, config.eval_pairs, next_seed())?;
    Ok(DriftReport {
        flipped_dim,
        flipped_weight: before.weights[flipped_dim],
        initial_baseline,
        days,
        post_swap_accuracy: evaluate_accuracy(handle.load().as_ref(), &eval)?,
        new_oracle_accuracy: oracle_accuracy(&after, &eval)?,
    })
}
