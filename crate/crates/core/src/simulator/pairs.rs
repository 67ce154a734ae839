use rand::Rng;

use super::ab::stream_rng;
use super::corpus::SyntheticPost;
use super::llm::SimulatedLlm;
use super::user::SyntheticUserModel;
use crate::candidate::SubjectLineCandidate;
use crate::generators::{postprocess, rule_based_subject};
use crate::pipeline::{shuffle_seed, PreferencePair};
use crate::reward::features::featurize;
use crate::reward::{evaluate_accuracy, EvalError, ModelError};

/// Sample seeds the simulated generator is asked with when building pairs.
const GENERATOR_SEEDS: u64 = 8;

/// `n` postprocessed simulated-generator outputs for `post`, seeds `0..n`,
/// without deduplication: the first `k` form the best-of-`k` set.
pub fn generated_candidates(post: &str, n: usize, max_words: usize) -> Vec<String> {
    (0..n as u64)
        .filter_map(|seed| postprocess(&SimulatedLlm::respond(post, seed), max_words).ok())
        .collect()
}

/// Per-post candidate sets for offline best-of-N evaluation.
pub fn candidate_sets(posts: &[SyntheticPost], n: usize, max_words: usize) -> Vec<(String, Vec<String>)> {
    posts
        .iter()
        .map(|p| (p.text.clone(), generated_candidates(&p.text, n, max_words)))
        .collect()
}

/// Preference pairs drawn straight from the user model's Bradley–Terry
/// likelihood. Each pair compares the rule-based subject or a generated
/// one against a different generated subject of a random post; the winner
/// is sampled with probability `sigmoid(w*·(φa − φb) / τ)`. `lift_ratio`
/// carries the model's expected click-rate ratio of winner to loser.
pub fn sample_preference_pairs(
    posts: &[SyntheticPost],
    user: &SyntheticUserModel,
    count: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>, ModelError> {
    let mut out = Vec::with_capacity(count);
    if posts.is_empty() {
        return Ok(out);
    }
    let mut rng = stream_rng(seed, 7, 0);
    let mut guard = 0;
    while out.len() < count {
        guard += 1;
        assert!(
            guard < count * 50 + 1000,
            "corpus too uniform to draw distinct candidate pairs"
        );
        let post = &posts[rng.gen_range(0..posts.len())];
        let a = if rng.gen_bool(0.5) {
            SubjectLineCandidate::rule(rule_based_subject(&post.text, 10).expect("corpus posts are non-empty"))
        } else {
            let s = rng.gen_range(0..GENERATOR_SEEDS);
            match postprocess(&SimulatedLlm::respond(&post.text, s), 10) {
                Ok(t) => SubjectLineCandidate::generated(t),
                Err(_) => continue,
            }
        };
        let s = rng.gen_range(0..GENERATOR_SEEDS);
        let Ok(b_text) = postprocess(&SimulatedLlm::respond(&post.text, s), 10) else {
            continue;
        };
        if b_text == a.text {
            continue;
        }
        let b = SubjectLineCandidate::generated(b_text);
        let fa = featurize(&post.text, &a.text)?;
        let fb = featurize(&post.text, &b.text)?;
        let a_wins = rng.gen_bool(user.preference_probability(&fa, &fb));
        let (pa, pb) = (
            user.click_probability_features(&fa),
            user.click_probability_features(&fb),
        );
        let (winner, loser, ratio) = if a_wins { (a, b, pa / pb) } else { (b, a, pb / pa) };
        let post_id = format!("{}#{}", post.post_id, out.len());
        out.push(PreferencePair {
            shuffle_seed: shuffle_seed(seed, &post_id),
            post_id,
            post_text: post.text.clone(),
            winner,
            loser,
            lift_ratio: if ratio.is_finite() { ratio } else { 0.0 },
        });
    }
    Ok(out)
}

/// Accuracy of the Bayes comparator (the planted model itself) on `pairs`.
pub fn oracle_accuracy(user: &SyntheticUserModel, pairs: &[PreferencePair]) -> Result<f64, EvalError> {
    evaluate_accuracy(user, pairs)
}
