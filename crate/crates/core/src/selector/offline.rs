use serde::{Deserialize, Serialize};

use crate::reward::{sigmoid, EvalError, RewardScorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestOfNRow {
    pub n: usize,
    /// Mean over posts of the best reward among the first `n` candidates.
    pub mean_best: f64,
    /// `mean_best` relative to best-of-1.
    pub ratio: f64,
}

/// Best-of-N table from per-post candidate rewards. The first `n` entries of
/// each post's list form its N-candidate set, so sets are nested in `n`.
pub fn best_of_n_ratios(rewards: &[Vec<f64>], n_values: &[usize]) -> Result<Vec<BestOfNRow>, EvalError> {
    if rewards.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(EvalError::InvalidInput("n values must be non-empty and >= 1".into()));
    }
    let needed = *n_values.iter().max().expect("non-empty");
    if let Some(short) = rewards.iter().find(|r| r.len() < needed) {
        return Err(EvalError::InvalidInput(format!(
            "best-of-{needed} needs {needed} candidates per post, found {}",
            short.len()
        )));
    }
    let mean_best = |n: usize| {
        rewards
            .iter()
            .map(|r| r[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / rewards.len() as f64
    };
    let base = mean_best(1);
    Ok(n_values
        .iter()
        .map(|&n| {
            let m = mean_best(n);
            BestOfNRow {
                n,
                mean_best: m,
                ratio: m / base,
            }
        })
        .collect())
}

/// Best-of-N over scored candidate sets, using `sigmoid(score)` as the
/// (positive) reward so ratios are well defined.
pub fn offline_best_of_n_eval(
    scorer: &dyn RewardScorer,
    posts: &[(String, Vec<String>)],
    n_values: &[usize],
) -> Result<Vec<BestOfNRow>, EvalError> {
    let rewards = posts
        .iter()
        .map(|(post, cands)| {
            cands
                .iter()
                .map(|c| scorer.score(post, c).map(sigmoid))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    best_of_n_ratios(&rewards, n_values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreLift {
    /// Fraction of posts where A's reward is at least B's.
    pub win_rate: f64,
    /// Mean reward under A over mean reward under B.
    pub ratio: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

pub fn score_lift_from_scores(a: &[f64], b: &[f64]) -> Result<ScoreLift, EvalError> {
    if a.is_empty() {
        return Err(EvalError::EmptyEvalSet);
    }
    if a.len() != b.len() {
        return Err(EvalError::InvalidInput(format!(
            "{} scores for A, {} for B",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let wins = a.iter().zip(b).filter(|(x, y)| x >= y).count() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    Ok(ScoreLift {
        win_rate: wins / n,
        ratio: mean_a / mean_b,
        mean_a,
        mean_b,
    })
}

/// Compares two generators' subjects (one per post) by `sigmoid(score)`.
pub fn score_lift(
    scorer: &dyn RewardScorer,
    posts: &[String],
    subjects_a: &[String],
    subjects_b: &[String],
) -> Result<ScoreLift, EvalError> {
    if posts.len() != subjects_a.len() || posts.len() != subjects_b.len() {
        return Err(EvalError::InvalidInput(
            "need one subject per post from each generator".into(),
        ));
    }
    let reward = |subjects: &[String]| {
        posts
            .iter()
            .zip(subjects)
            .map(|(p, s)| scorer.score(p, s).map(sigmoid))
            .collect::<Result<Vec<_>, _>>()
    };
    score_lift_from_scores(&reward(subjects_a)?, &reward(subjects_b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_of_one_is_unity() {
        let rows = best_of_n_ratios(&[vec![0.2, 0.9], vec![0.4, 0.1]], &[1, 2]).unwrap();
        assert_eq!(rows[0].ratio, 1.0);
        assert!((rows[1].ratio - (0.9 + 0.4) / (0.2 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn best_of_n_errors() {
        assert!(matches!(best_of_n_ratios(&[], &[1]), Err(EvalError::EmptyEvalSet)));
        assert!(matches!(
            best_of_n_ratios(&[vec![0.1]], &[2]),
            Err(EvalError::InvalidInput(_))
        ));
    }

    #[test]
    fn lift_arithmetic() {
        let l = score_lift_from_scores(&[0.6, 0.8], &[0.5, 0.5]).unwrap();
        assert!((l.ratio - 1.4).abs() < 1e-12);
        assert_eq!(l.win_rate, 1.0);
        let same = score_lift_from_scores(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!((same.win_rate, same.ratio), (1.0, 1.0));
        assert!(matches!(score_lift_from_scores(&[], &[]), Err(EvalError::EmptyEvalSet)));
    }

    proptest::proptest! {
        #[test]
        fn ratios_non_decreasing(rewards in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 5), 1..20)) {
            let rows = best_of_n_ratios(&rewards, &[1, 2, 3, 4, 5]).unwrap();
            for w in rows.windows(2) {
                proptest::prop_assert!(w[1].ratio >= w[0].ratio);
            }
        }
    }
}
