use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::reward::features::{featurize, unigram_feature, Dense, FeatureVector, DENSE_DIM, FEATURE_DIM};
use crate::reward::{sigmoid, ModelError, RewardScorer};

/// Guards the division by the noise temperature.
pub const MIN_TEMPERATURE: f64 = 1e-9;

/// Planted click model over the reward featurizer's schema:
/// `P(click) = sigmoid((w*·φ + b*) / max(τ, ε))`.
///
/// The intercept `b*` sets the base click rate and cancels in every pairwise
/// comparison, so the Bayes-optimal comparator is the sign of `w*·(φa − φb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUserModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub noise_temperature: f64,
}

const PLANTED_DENSE: [(Dense, f64); 11] = [
    (Dense::Greeting, -3.0),
    (Dense::PrefixSimilarity, 1.2),
    (Dense::EndsWithEllipsis, -0.6),
    (Dense::EmojiPresent, 0.4),
    (Dense::AllCapsWordCount, 2.0),
    (Dense::WordCount, 0.8),
    (Dense::QuestionMark, 0.3),
    (Dense::Exclamation, -0.2),
    (Dense::UrlPresent, -1.0),
    (Dense::DigitPresent, 0.2),
    (Dense::FirstPersonPronoun, 0.3),
];

const PLANTED_WORDS: [(&str, f64); 19] = [
    ("lost", 0.6),
    ("missing", 0.5),
    ("free", 0.7),
    ("alert", 0.5),
    ("reward", 0.4),
    ("coyote", 0.5),
    ("bear", 0.6),
    ("police", 0.3),
    ("cars", 0.3),
    ("warning", 0.4),
    ("please", -0.3),
    ("thanks", -0.3),
    ("everyone", -0.2),
    ("welcome", -0.2),
    ("recommend", 0.2),
    ("party", 0.3),
    ("shy", -0.2),
    ("first", -0.2),
    ("snack", -0.2),
];

impl SyntheticUserModel {
    pub fn zeros(noise_temperature: f64) -> Self {
        Self {
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
            noise_temperature,
        }
    }

    /// The default scenario: bare greetings and truncation hurt, concrete
    /// and urgent words help, and subjects that read like the start of the
    /// post are favored. Base click rate is roughly 10%.
    pub fn planted(noise_temperature: f64) -> Self {
        let mut m = Self::zeros(noise_temperature);
        for (slot, w) in PLANTED_DENSE {
            m.weights[slot as usize] = w;
        }
        for (word, w) in PLANTED_WORDS {
            m.set_word_weight(word, w);
        }
        m.bias = -4.3;
        m
    }

    /// `active_dims` non-zero weights drawn uniformly from ±[0.5, 2.0]: up to
    /// ten dense slots, the rest on unigrams from `vocabulary`.
    pub fn random_sparse(active_dims: usize, vocabulary: &[String], noise_temperature: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(noise_temperature);
        let mut dense: Vec<usize> = (0..DENSE_DIM - 1).collect();
        dense.shuffle(&mut rng);
        let n_dense = active_dims.min(10);
        let draw = |rng: &mut ChaCha8Rng| {
            let magnitude = rng.gen_range(0.5..2.0);
            if rng.gen_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        };
        for &slot in &dense[..n_dense] {
            m.weights[slot] = draw(&mut rng);
        }
        let mut words: Vec<&String> = vocabulary.iter().collect();
        words.shuffle(&mut rng);
        let mut planted = 0;
        for w in words {
            if n_dense + planted == active_dims {
                break;
            }
            let (idx, _) = unigram_feature(w);
            if m.weights[idx] == 0.0 {
                let v = draw(&mut rng);
                m.set_word_weight(w, v);
                planted += 1;
            }
        }
        m.bias = -2.0;
        m
    }

    /// Plants weight `w` on a subject unigram, accounting for the hash sign.
    pub fn set_word_weight(&mut self, word: &str, w: f64) {
        let (idx, sign) = unigram_feature(word);
        self.weights[idx] = w * sign;
    }

    pub fn active_dims(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    /// Index of the largest-magnitude weight.
    pub fn dominant_dim(&self) -> usize {
        (0..self.weights.len())
            .max_by(|&a, &b| self.weights[a].abs().total_cmp(&self.weights[b].abs()).then(b.cmp(&a)))
            .expect("non-empty weights")
    }

    pub fn utility(&self, features: &FeatureVector) -> f64 {
        features.dot(&self.weights) + self.bias
    }

    fn temperature(&self) -> f64 {
        self.noise_temperature.max(MIN_TEMPERATURE)
    }

    pub fn click_probability_features(&self, features: &FeatureVector) -> f64 {
        sigmoid(self.utility(features) / self.temperature())
    }

    pub fn click_probability(&self, post: &str, subject: &str) -> Result<f64, ModelError> {
        Ok(self.click_probability_features(&featurize(post, subject)?))
    }

    /// Probability that a user prefers the subject with features `a` over
    /// the one with features `b`.
    pub fn preference_probability(&self, a: &FeatureVector, b: &FeatureVector) -> f64 {
        sigmoid(a.difference(b).dot(&self.weights) / self.temperature())
    }
}

impl RewardScorer for SyntheticUserModel {
    fn score(&self, post: &str, subject: &str) -> Result<f64, ModelError> {
        Ok(self.utility(&featurize(post, subject)?))
    }
}
