//! Synthetic posts, a planted click model and an A/B loop that exercise the
//! whole pipeline against known ground truth.

mod ab;
mod corpus;
mod drift;
mod endpoint;
mod llm;
mod pairs;
mod user;

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::Provenance;
use crate::generators::{
    rule_based_subject, BackoffConfig, GenerationError, GeneratorSpec, RecordingSleeper, RemoteGenerator,
};
use crate::pipeline::{
    aggregate, label_pairs, CatalogEntry, EngagementRecord, LabelSummary, MinSendsScope, PipelineConfig, PipelineError,
    PreferencePair,
};
use crate::reward::{
    evaluate_accuracy, train_pairwise, EvalError, ModelError, ModelKind, ParamsHandle, RewardModelParams, TrainConfig,
    TrainError,
};
use crate::selector::{ManualClock, SelectError, SelectionCache, Selector, SelectorConfig, DEFAULT_TTL_SECS};

pub use ab::{catalog, simulate_ab, simulate_arm, start_day, stream_rng, ArmTotals};
pub use corpus::{gen_corpus, vocabulary, SyntheticPost, GREETING_SHARE};
pub use drift::{run_drift_scenario, DriftConfig, DriftReport};
pub use endpoint::{FailureMode, MockEndpoint};
pub use llm::SimulatedLlm;
pub use pairs::{candidate_sets, generated_candidates, oracle_accuracy, sample_preference_pairs};
pub use user::{SyntheticUserModel, MIN_TEMPERATURE};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Monitor(#[from] crate::monitor::MonitorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    RuleOnly,
    GeneratorOnly,
    Selector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_posts: usize,
    pub sends_per_post: u64,
    /// Share of phase-one sends that go to the generated subject.
    pub bucket_split: f64,
    pub days: u32,
    pub seed: u64,
    pub arms: Vec<Arm>,
    pub noise_temperature: f64,
    /// Candidates per post in the selector arm, the rule-based one included.
    pub n: usize,
    pub labeling: PipelineConfig,
    pub train: TrainConfig,
    /// Share of labeled pairs held out from training.
    pub holdout_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_posts: 2000,
            sends_per_post: 600,
            bucket_split: 0.5,
            days: 7,
            seed: 0,
            arms: vec![Arm::RuleOnly, Arm::GeneratorOnly, Arm::Selector],
            noise_temperature: 1.0,
            n: 2,
            // An even split of 600 sends leaves ~300 per arm, so the send
            // floor is applied to the post total here.
            labeling: PipelineConfig {
                min_sends_scope: MinSendsScope::Combined,
                ..PipelineConfig::default()
            },
            train: TrainConfig {
                max_epochs: 2000,
                learning_rate: 0.5,
                ..TrainConfig::default()
            },
            holdout_fraction: 0.2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if self.num_posts == 0 {
            return bad("num_posts must be >= 1");
        }
        if self.sends_per_post == 0 {
            return bad("sends_per_post must be >= 1");
        }
        if !(self.bucket_split > 0.0 && self.bucket_split < 1.0) {
            return bad("bucket_split must be in (0, 1)");
        }
        if self.days == 0 {
            return bad("days must be >= 1");
        }
        if self.noise_temperature.is_nan() || self.noise_temperature < 0.0 {
            return bad("noise_temperature must be >= 0");
        }
        if self.n == 0 {
            return bad("n must be >= 1");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must be in [0, 1)");
        }
        self.labeling.validate()?;
        self.train.validate().map_err(SimError::Train)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: Arm,
    pub sends: u64,
    pub clicks: u64,
    pub ctr: f64,
    pub ctr_ci: [f64; 2],
    pub expected_ctr: f64,
    /// Relative CTR change versus the rule-only arm, with a 95% interval.
    pub lift: Option<f64>,
    pub lift_ci: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub arms: Vec<ArmReport>,
    pub labeling: LabelSummary,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
    pub holdout_accuracy: Option<f64>,
    pub oracle_accuracy: Option<f64>,
    pub remote_generations: u64,
    /// How often the selector served each source.
    pub selector_sources: SourceCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub rule: usize,
    pub generated: usize,
    pub fallback: usize,
}

/// Everything a run produces, for writing out as artifacts.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub logs: Vec<EngagementRecord>,
    pub catalog: Vec<CatalogEntry>,
    pub pairs: Vec<PreferencePair>,
    pub params: RewardModelParams,
}

/// Wald interval for a click rate.
pub fn ctr_interval(clicks: u64, sends: u64) -> [f64; 2] {
    if sends == 0 {
        return [0.0, 0.0];
    }
    let p = clicks as f64 / sends as f64;
    let half = Z_95 * (p * (1.0 - p) / sends as f64).sqrt();
    [(p - half).max(0.0), (p + half).min(1.0)]
}

/// Relative lift of `arm` over `base` with a 95% interval from the delta
/// method on the log ratio. `None` when either arm has no clicks.
pub fn lift_interval(arm: &ArmTotals, base: &ArmTotals) -> Option<(f64, [f64; 2])> {
    if arm.clicks == 0 || base.clicks == 0 {
        return None;
    }
    let (pa, pb) = (arm.ctr(), base.ctr());
    let log_ratio = (pa / pb).ln();
    let se = ((1.0 - pa) / arm.clicks as f64 + (1.0 - pb) / base.clicks as f64).sqrt();
    Some((
        pa / pb - 1.0,
        [(log_ratio - Z_95 * se).exp() - 1.0, (log_ratio + Z_95 * se).exp() - 1.0],
    ))
}

/// Selector wired to the simulated generator, with an in-memory cache and a
/// frozen clock.
pub fn simulated_selector(n: usize, params: Arc<ParamsHandle>) -> (Selector, Arc<SimulatedLlm>) {
    let llm = Arc::new(SimulatedLlm::new());
    let generator = RemoteGenerator::new(llm.clone(), "simulated", BackoffConfig::default())
        .with_sleeper(Arc::new(RecordingSleeper::default()));
    let cache = SelectionCache::with_clock(DEFAULT_TTL_SECS, Arc::new(ManualClock::new(0)));
    let selector = Selector::new(
        SelectorConfig {
            n,
            max_words: 10,
            generator_version: "simulated".into(),
        },
        Arc::new(cache),
        params,
        Some(Arc::new(generator)),
        vec![GeneratorSpec::base_extractor()],
    );
    (selector, llm)
}

/// One loop iteration: collect rule-vs-generated logs, label and train a
/// pairwise reward model, then run the configured arms with the trained
/// model behind the selector.
pub async fn run_end_to_end(config: &SimConfig) -> Result<SimOutcome, SimError> {
    run_with_user(config, &SyntheticUserModel::planted(config.noise_temperature)).await
}

pub async fn run_with_user(config: &SimConfig, user: &SyntheticUserModel) -> Result<SimOutcome, SimError> {
    config.validate()?;
    let posts = gen_corpus(config.num_posts, config.seed);
    let handle = Arc::new(ParamsHandle::new(RewardModelParams::zeros(ModelKind::Pairwise)));
    let (selector, _llm) = simulated_selector(config.n.max(2), handle.clone());

    // Phase 1: rule-based control against the generator's first candidate.
    let mut rule = Vec::with_capacity(posts.len());
    let mut generated = Vec::with_capacity(posts.len());
    for p in &posts {
        let r = rule_based_subject(&p.text, 10)?;
        let g = match selector.candidates_for_post(&p.post_id, &p.text).await {
            Ok(c) => c.into_iter().next().unwrap_or_else(|| r.clone()),
            Err(_) => r.clone(),
        };
        rule.push(r);
        generated.push(g);
    }
    let logs = simulate_ab(
        &posts,
        &rule,
        &generated,
        user,
        config.sends_per_post,
        config.bucket_split,
        config.days,
        config.seed,
    )?;
    let catalog = catalog(&posts, &rule, &generated);

    // Phase 2: label and train.
    let labeled = label_pairs(&aggregate(&logs, &catalog)?, &config.labeling);
    let mut pairs = labeled.pairs;
    let mut rng = stream_rng(config.seed, 2, 0);
    pairs.shuffle(&mut rng);
    let holdout_n = (pairs.len() as f64 * config.holdout_fraction).round() as usize;
    let (holdout, train) = pairs.split_at(holdout_n);
    let params = if train.is_empty() {
        RewardModelParams::zeros(ModelKind::Pairwise)
    } else {
        train_pairwise(
            train,
            &TrainConfig {
                seed: config.seed,
                ..config.train.clone()
            },
        )?
    };
    let (holdout_accuracy, oracle) = if holdout.is_empty() {
        (None, None)
    } else {
        (
            Some(evaluate_accuracy(&params, holdout)?),
            Some(oracle_accuracy(user, holdout)?),
        )
    };
    handle.swap(params.clone());

    // Phase 3: the three arms on fresh traffic.
    let mut chosen = Vec::with_capacity(posts.len());
    let mut sources = SourceCounts::default();
    for p in &posts {
        let d = selector.select_for_post(&p.post_id, &p.text, Some(config.n)).await?;
        match d.source {
            Provenance::Rule => sources.rule += 1,
            Provenance::Generated => sources.generated += 1,
            Provenance::Fallback => sources.fallback += 1,
        }
        chosen.push(d.chosen.text);
    }
    let mut totals = Vec::new();
    let mut arms = config.arms.clone();
    arms.sort();
    arms.dedup();
    for arm in &arms {
        let (subjects, phase) = match arm {
            Arm::RuleOnly => (&rule, 10),
            Arm::GeneratorOnly => (&generated, 11),
            Arm::Selector => (&chosen, 12),
        };
        totals.push((
            *arm,
            simulate_arm(&posts, subjects, user, config.sends_per_post, config.seed, phase)?,
        ));
    }
    let base = totals.iter().find(|(a, _)| *a == Arm::RuleOnly).map(|(_, t)| *t);
    let arm_reports = totals
        .iter()
        .map(|(arm, t)| {
            let lift = match (arm, &base) {
                (Arm::RuleOnly, _) | (_, None) => None,
                (_, Some(b)) => lift_interval(t, b),
            };
            ArmReport {
                arm: *arm,
                sends: t.sends,
                clicks: t.clicks,
                ctr: t.ctr(),
                ctr_ci: ctr_interval(t.clicks, t.sends),
                expected_ctr: t.expected_ctr,
                lift: lift.map(|l| l.0),
                lift_ci: lift.map(|l| l.1),
            }
        })
        .collect();

    let report = SimReport {
        config: config.clone(),
        arms: arm_reports,
        labeling: labeled.summary,
        train_pairs: train.len(),
        holdout_pairs: holdout.len(),
        holdout_accuracy,
        oracle_accuracy: oracle,
        remote_generations: selector.metrics().snapshot().remote_calls,
        selector_sources: sources,
    };
    Ok(SimOutcome {
        report,
        logs,
        catalog,
        pairs,
        params,
    })
}

impl SimReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_interval_brackets_estimate() {
        let a = ArmTotals {
            sends: 100_000,
            clicks: 11_000,
            expected_ctr: 0.11,
        };
        let b = ArmTotals {
            sends: 100_000,
            clicks: 10_000,
            expected_ctr: 0.10,
        };
        let (lift, [lo, hi]) = lift_interval(&a, &b).unwrap();
        assert!((lift - 0.1).abs() < 1e-12);
        assert!(lo < lift && lift < hi && lo > 0.0);
        assert!(lift_interval(&a, &ArmTotals::default()).is_none());
    }

    #[test]
    fn config_validation() {
        SimConfig::default().validate().unwrap();
        let c = SimConfig {
            bucket_split: 1.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[tokio::test]
    async fn small_run_is_reproducible() {
        let config = SimConfig {
            num_posts: 60,
            sends_per_post: 200,
            ..SimConfig::default()
        };
        let a = run_end_to_end(&config).await.unwrap();
        let b = run_end_to_end(&config).await.unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.params.to_json().unwrap(), b.params.to_json().unwrap());
        assert_eq!(a.report.remote_generations, 60);
        for arm in &a.report.arms {
            assert!((0.0..=1.0).contains(&arm.ctr));
        }
    }
}
