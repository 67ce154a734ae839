use engage_core::candidate::SubjectLineCandidate;
use engage_core::generators::rule_based_subject;
use engage_core::pipeline::{shuffle_seed, PreferencePair};
use engage_core::reward::features::{Dense, DENSE_DIM};
use engage_core::reward::train::{pairwise_loss_grad, pointwise_loss_grad};
use engage_core::reward::{
    evaluate_accuracy, fit_pairwise, fit_pointwise, rank_tournament, FeatureVector, ModelKind, RewardModelParams,
    RewardScorer, TrainConfig, FEATURE_DIM,
};
use engage_core::simulator::{gen_corpus, generated_candidates};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(value: f64) -> FeatureVector {
    let mut f = FeatureVector::default();
    f.dense[Dense::Greeting as usize] = value;
    f
}

fn exact_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1.0,
        l2: 0.0,
        max_epochs: 50_000,
        grad_tol: 1e-12,
        seed: 3,
        fit_bias: false,
    }
}

/// Maximizer of `loglik` on a uniform grid over [-5, 5].
fn grid_argmax(loglik: impl Fn(f64) -> f64) -> f64 {
    let steps = 100_000;
    (0..=steps)
        .map(|i| -5.0 + 10.0 * i as f64 / steps as f64)
        .max_by(|a, b| loglik(*a).total_cmp(&loglik(*b)))
        .unwrap()
}

fn log_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

#[test]
fn pointwise_toy_matches_grid_oracle() {
    let examples = vec![
        (unit(1.0), true),
        (unit(1.0), true),
        (unit(1.0), true),
        (unit(1.0), false),
    ];
    let oracle = grid_argmax(|w| 3.0 * log_sigmoid(w) + log_sigmoid(-w));
    assert!((oracle - 3f64.ln()).abs() < 1e-3);
    let p = fit_pointwise(&examples, &exact_config()).unwrap();
    let w = p.weights[Dense::Greeting as usize];
    assert!((w - 3f64.ln()).abs() < 1e-3, "w = {w}");
    assert!((w - oracle).abs() < 1e-3);
}

#[test]
fn pairwise_toy_matches_grid_oracle() {
    let diffs = vec![unit(1.0), unit(1.0), unit(-1.0)];
    let oracle = grid_argmax(|w| 2.0 * log_sigmoid(w) + log_sigmoid(-w));
    assert!((oracle - 2f64.ln()).abs() < 1e-3);
    let p = fit_pairwise(&diffs, &exact_config()).unwrap();
    let w = p.weights[Dense::Greeting as usize];
    assert!((w - 2f64.ln()).abs() < 1e-3, "w = {w}");
    assert_eq!(p.kind, ModelKind::Pairwise);
}

/// Random sparse vector over a few dense slots and hashed buckets.
fn random_features(rng: &mut ChaCha8Rng) -> FeatureVector {
    let mut f = FeatureVector::default();
    for slot in 0..DENSE_DIM {
        if rng.gen_bool(0.4) {
            f.dense[slot] = rng.gen_range(-1.5..1.5);
        }
    }
    let mut idx: Vec<u32> = (0..4).map(|_| rng.gen_range(0..32)).collect();
    idx.sort_unstable();
    idx.dedup();
    f.hashed = idx.into_iter().map(|i| (i, rng.gen_range(-1.0..1.0))).collect();
    f
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences on every coordinate the data touches, plus the bias.
pub fn max_gradient_error(seed: u64, points: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let data: Vec<(FeatureVector, bool)> = (0..12)
            .map(|_| (random_features(&mut rng), rng.gen_bool(0.5)))
            .collect();
        let l2 = rng.gen_range(0.0..0.1);
        let mut w = vec![0.0; FEATURE_DIM];
        let mut coords: Vec<usize> = data.iter().flat_map(|(f, _)| f.nonzeros().map(|(i, _)| i)).collect();
        coords.sort_unstable();
        coords.dedup();
        for &i in &coords {
            w[i] = rng.gen_range(-1.0..1.0);
        }
        let bias = rng.gen_range(-1.0..1.0);

        let (_, grad, grad_b) = pointwise_loss_grad(&data, &w, bias, l2);
        for &i in &coords {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let numeric =
                (pointwise_loss_grad(&data, &wp, bias, l2).0 - pointwise_loss_grad(&data, &wm, bias, l2).0) / (2.0 * h);
            worst = worst.max(relative_error(grad[i], numeric));
        }
        let numeric_b = (pointwise_loss_grad(&data, &w, bias + h, l2).0
            - pointwise_loss_grad(&data, &w, bias - h, l2).0)
            / (2.0 * h);
        worst = worst.max(relative_error(grad_b, numeric_b));

        let diffs: Vec<FeatureVector> = data.into_iter().map(|(f, _)| f).collect();
        let (_, grad) = pairwise_loss_grad(&diffs, &w, l2);
        for &i in &coords {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let numeric = (pairwise_loss_grad(&diffs, &wp, l2).0 - pairwise_loss_grad(&diffs, &wm, l2).0) / (2.0 * h);
            worst = worst.max(relative_error(grad[i], numeric));
        }
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    let err = max_gradient_error(11, 100);
    assert!(err < 1e-5, "max relative error {err}");
}

#[test]
fn strictly_convex_objective_has_one_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let diffs: Vec<FeatureVector> = (0..60).map(|_| random_features(&mut rng)).collect();
    let cfg = |seed| TrainConfig {
        learning_rate: 0.5,
        l2: 0.05,
        max_epochs: 20_000,
        grad_tol: 1e-10,
        seed,
        fit_bias: false,
    };
    let a = fit_pairwise(&diffs, &cfg(1)).unwrap();
    let b = fit_pairwise(&diffs, &cfg(2)).unwrap();
    assert!(a.metadata.converged && b.metadata.converged);
    let gap = a
        .weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-6, "gap {gap}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let diffs: Vec<FeatureVector> = (0..40).map(|_| random_features(&mut rng)).collect();
    let cfg = TrainConfig {
        seed: 9,
        ..TrainConfig::default()
    };
    let a = fit_pairwise(&diffs, &cfg).unwrap();
    let b = fit_pairwise(&diffs, &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

fn random_params(rng: &mut ChaCha8Rng) -> RewardModelParams {
    let mut p = RewardModelParams::zeros(ModelKind::Pairwise);
    for w in p.weights.iter_mut() {
        *w = rng.gen_range(-1.0..1.0);
    }
    p
}

#[test]
fn random_params_are_at_chance_on_balanced_labels() {
    let posts = gen_corpus(2000, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut pairs = Vec::new();
    while pairs.len() < 10_000 {
        let post = &posts[rng.gen_range(0..posts.len())];
        let rule = rule_based_subject(&post.text, 10).unwrap();
        let gen = generated_candidates(&post.text, 4, 10);
        let other = &gen[rng.gen_range(0..gen.len())];
        if *other == rule {
            continue;
        }
        let (winner, loser) = if rng.gen_bool(0.5) {
            (rule, other.clone())
        } else {
            (other.clone(), rule)
        };
        let post_id = format!("{}#{}", post.post_id, pairs.len());
        pairs.push(PreferencePair {
            shuffle_seed: shuffle_seed(0, &post_id),
            post_id,
            post_text: post.text.clone(),
            winner: SubjectLineCandidate::rule(winner),
            loser: SubjectLineCandidate::generated(loser),
            lift_ratio: 1.0,
        });
    }
    let acc = evaluate_accuracy(&random_params(&mut rng), &pairs).unwrap();
    assert!((acc - 0.5).abs() < 0.03, "accuracy {acc}");
}

const WORDS: [&str; 16] = [
    "lost",
    "dog",
    "free",
    "couch",
    "hello",
    "neighbors",
    "ALERT",
    "tonight",
    "please",
    "help",
    "found",
    "keys",
    "party",
    "street",
    "coyote",
    "sale",
];

/// Pools of random subjects under random linear scorers.
pub fn tournament_violations(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let params = random_params(&mut rng);
        let m = rng.gen_range(1..=8);
        let candidates: Vec<String> = (0..m)
            .map(|_| {
                (0..rng.gen_range(1..6))
                    .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let post = "Neighbors, a lost dog was seen near the park tonight.";
        let result = rank_tournament(&params, post, &candidates).unwrap();
        let scores: Vec<f64> = candidates.iter().map(|c| params.score(post, c).unwrap()).collect();
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut order = result.order.clone();
        order.sort_unstable();
        if result.comparison_count != m - 1
            || (scores[result.winner()] - best).abs() > 1e-12
            || order != (0..m).collect::<Vec<_>>()
        {
            bad += 1;
        }
    }
    bad
}

#[test]
fn tournament_finds_argmax_with_m_minus_one_comparisons() {
    assert_eq!(tournament_violations(1000, 31), 0);
}

struct Table(Vec<(&'static str, f64)>);

impl RewardScorer for Table {
    fn score(&self, _post: &str, subject: &str) -> Result<f64, engage_core::reward::ModelError> {
        Ok(self.0.iter().find(|(s, _)| *s == subject).map(|(_, v)| *v).unwrap())
    }
}

#[test]
fn tournament_examples() {
    let table = Table(vec![("a", 0.1), ("b", 0.9), ("c", 0.5)]);
    let pool: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let r = rank_tournament(&table, "p", &pool).unwrap();
    assert_eq!((r.winner(), r.comparison_count), (1, 2));
    let one = rank_tournament(&table, "p", &pool[..1]).unwrap();
    assert_eq!((one.winner(), one.comparison_count), (0, 0));
}
