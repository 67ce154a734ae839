//! Daily accuracy check against fresh preference pairs, with a
//! holdout-guarded retrain and atomic params swap when accuracy drifts.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::PreferencePair;
use crate::reward::{
    evaluate_accuracy, train_pairwise, EvalError, ParamsHandle, RewardModelParams, RewardScorer, TrainConfig,
    TrainError,
};

pub const DEFAULT_THRESHOLD: f64 = 0.10;
pub const DEFAULT_MIN_SAMPLE: usize = 500;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report does not encode: {0}")]
    Encode(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorBaseline {
    pub baseline_accuracy: f64,
    pub established_at: NaiveDate,
    #[serde(default = "default_min_sample")]
    pub min_sample: usize,
}

fn default_min_sample() -> usize {
    DEFAULT_MIN_SAMPLE
}

impl MonitorBaseline {
    pub fn new(baseline_accuracy: f64, established_at: NaiveDate) -> Self {
        Self {
            baseline_accuracy,
            established_at,
            min_sample: DEFAULT_MIN_SAMPLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub swapped: bool,
    pub candidate_accuracy: f64,
    pub incumbent_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub day: NaiveDate,
    pub sample_size: usize,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    /// `(baseline - accuracy) / baseline`.
    pub relative_drop: f64,
    pub threshold: f64,
    pub retrain_triggered: bool,
    pub insufficient_sample: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap: Option<SwapOutcome>,
    /// Drift that did not end in a successful swap.
    pub alert: bool,
}

/// Accuracy on `fresh` versus the baseline. Retraining is called for when
/// the sample is large enough and the relative drop exceeds `threshold`.
pub fn daily_check(
    scorer: &dyn RewardScorer,
    fresh: &[PreferencePair],
    baseline: &MonitorBaseline,
    day: NaiveDate,
    threshold: f64,
) -> Result<MonitorReport, MonitorError> {
    let accuracy = if fresh.is_empty() {
        0.0
    } else {
        evaluate_accuracy(scorer, fresh)?
    };
    let insufficient_sample = fresh.len() < baseline.min_sample;
    let relative_drop = if fresh.is_empty() || baseline.baseline_accuracy <= 0.0 {
        0.0
    } else {
        (baseline.baseline_accuracy - accuracy) / baseline.baseline_accuracy
    };
    let retrain_triggered = !insufficient_sample && relative_drop > threshold;
    Ok(MonitorReport {
        day,
        sample_size: fresh.len(),
        accuracy,
        baseline_accuracy: baseline.baseline_accuracy,
        relative_drop,
        threshold,
        retrain_triggered,
        insufficient_sample,
        swap: None,
        alert: retrain_triggered,
    })
}

/// Swaps `candidate` in only if its holdout accuracy is at least the
/// incumbent's; on a swap the baseline moves to the candidate's accuracy.
pub fn guarded_swap(
    handle: &ParamsHandle,
    candidate: RewardModelParams,
    holdout: &[PreferencePair],
    baseline: &mut MonitorBaseline,
    day: NaiveDate,
) -> Result<SwapOutcome, MonitorError> {
    let incumbent_accuracy = evaluate_accuracy(handle.load().as_ref(), holdout)?;
    let candidate_accuracy = evaluate_accuracy(&candidate, holdout)?;
    let swapped = candidate_accuracy >= incumbent_accuracy;
    if swapped {
        handle.swap(candidate);
        baseline.baseline_accuracy = candidate_accuracy;
        baseline.established_at = day;
    } else {
        tracing::warn!(
            candidate_accuracy,
            incumbent_accuracy,
            "retrained model is worse on holdout; keeping incumbent"
        );
    }
    Ok(SwapOutcome {
        swapped,
        candidate_accuracy,
        incumbent_accuracy,
    })
}

/// Trains a pairwise candidate on `training` and applies [`guarded_swap`].
pub fn retrain_and_swap(
    handle: &ParamsHandle,
    training: &[PreferencePair],
    holdout: &[PreferencePair],
    config: &TrainConfig,
    baseline: &mut MonitorBaseline,
    day: NaiveDate,
) -> Result<SwapOutcome, MonitorError> {
    let candidate = train_pairwise(training, config)?;
    guarded_swap(handle, candidate, holdout, baseline, day)
}

/// One monitoring day: check, and on drift retrain and maybe swap.
#[allow(clippy::too_many_arguments)]
pub fn run_day(
    handle: &ParamsHandle,
    fresh: &[PreferencePair],
    training: &[PreferencePair],
    holdout: &[PreferencePair],
    baseline: &mut MonitorBaseline,
    config: &TrainConfig,
    day: NaiveDate,
    threshold: f64,
) -> Result<MonitorReport, MonitorError> {
    let mut report = daily_check(handle.load().as_ref(), fresh, baseline, day, threshold)?;
    if report.retrain_triggered {
        let outcome = retrain_and_swap(handle, training, holdout, config, baseline, day)?;
        report.alert = !outcome.swapped;
        report.swap = Some(outcome);
    }
    Ok(report)
}

/// Appends `report` as one JSON line.
pub fn append_report(path: &Path, report: &MonitorReport) -> Result<(), MonitorError> {
    let io = |source| MonitorError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut line = serde_json::to_string(report)?;
    line.push('\n');
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io)?;
    f.write_all(line.as_bytes()).map_err(io)
}
