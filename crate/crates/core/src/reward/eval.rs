use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{prob_prefers, ModelError, RewardScorer};
use crate::candidate::Provenance;
use crate::pipeline::PreferencePair;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("candidate list is empty")]
    EmptyCandidateSet,
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fraction of pairs whose winner scores strictly above its loser.
pub fn evaluate_accuracy(scorer: &dyn RewardScorer, pairs: &[PreferencePair]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    let mut correct = 0usize;
    for p in pairs {
        let w = scorer.score(&p.post_text, &p.winner.text)?;
        let l = scorer.score(&p.post_text, &p.loser.text)?;
        if w > l {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Threshold metrics for the question "does the generated subject win?".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub threshold: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// Predicts "generated wins" when P(generated ≻ rule) exceeds `threshold`.
/// Pairs without one rule and one generated side are skipped.
pub fn classification_report(
    scorer: &dyn RewardScorer,
    pairs: &[PreferencePair],
    threshold: f64,
) -> Result<ClassificationReport, EvalError> {
    let (mut tp, mut fp, mut tn, mut fneg) = (0, 0, 0, 0);
    for p in pairs {
        let (generated, rule, truth) = match (p.winner.source, p.loser.source) {
            (Provenance::Generated, Provenance::Rule) => (&p.winner, &p.loser, true),
            (Provenance::Rule, Provenance::Generated) => (&p.loser, &p.winner, false),
            _ => continue,
        };
        let predicted = prob_prefers(scorer, &p.post_text, &generated.text, &rule.text)? > threshold;
        match (predicted, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let total = tp + fp + tn + fneg;
    if total == 0 {
        return Err(EvalError::EmptyEvalSet);
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(ClassificationReport {
        threshold,
        true_positive: tp,
        false_positive: fp,
        true_negative: tn,
        false_negative: fneg,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        accuracy: ratio(tp + tn, total),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TournamentResult {
    /// Candidate indices, champion first, then the others from latest to
    /// earliest eliminated.
    pub order: Vec<usize>,
    pub comparison_count: usize,
}

impl TournamentResult {
    pub fn winner(&self) -> usize {
        self.order[0]
    }
}

/// Single-elimination pass: a running champion meets each next candidate and
/// is replaced only when the challenger is strictly preferred. Uses `m - 1`
/// pairwise comparisons for `m` candidates.
pub fn rank_tournament(
    scorer: &dyn RewardScorer,
    post: &str,
    candidates: &[String],
) -> Result<TournamentResult, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::EmptyCandidateSet);
    }
    let mut champion = 0;
    let mut eliminated = Vec::with_capacity(candidates.len() - 1);
    let mut comparisons = 0;
    for challenger in 1..candidates.len() {
        let p = prob_prefers(scorer, post, &candidates[challenger], &candidates[champion])?;
        comparisons += 1;
        if p > 0.5 {
            eliminated.push(champion);
            champion = challenger;
        } else {
            eliminated.push(challenger);
        }
    }
    let mut order = vec![champion];
    order.extend(eliminated.into_iter().rev());
    Ok(TournamentResult {
        order,
        comparison_count: comparisons,
    })
}
