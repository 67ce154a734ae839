//! Fixed-schema features for a (post, subject line) pair.
//!
//! The vector has a small dense block of hand-built text features followed by
//! signed-hashed unigrams and bigrams of the subject. Counts are stored
//! divided by a fixed scale so every dense slot stays roughly in `[0, 1]`;
//! the accessor methods undo the scaling.

use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::text::{is_ellipsis_marker, normalize_token};

pub const SCHEMA_VERSION: u32 = 1;
pub const DENSE_DIM: usize = 16;
pub const HASH_BITS: u32 = 14;
pub const HASH_BUCKETS: usize = 1 << HASH_BITS;
pub const FEATURE_DIM: usize = DENSE_DIM + HASH_BUCKETS;

/// Words of the post compared against the subject.
pub const PREFIX_WORDS: usize = 10;

const WORD_SCALE: f64 = 10.0;
const CHAR_SCALE: f64 = 100.0;
const CAPS_SCALE: f64 = 10.0;
const PUNCT_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Dense {
    WordCount = 0,
    CharCount,
    EndsWithEllipsis,
    EmojiPresent,
    AllCapsWordCount,
    FirstPersonPronoun,
    QuestionMark,
    DigitPresent,
    PunctuationCount,
    PrefixOverlap,
    PrefixSimilarity,
    CapitalRatio,
    Exclamation,
    Greeting,
    UrlPresent,
    Reserved,
}

pub const DENSE_NAMES: [&str; DENSE_DIM] = [
    "word_count",
    "char_count",
    "ends_with_ellipsis",
    "emoji_present",
    "all_caps_word_count",
    "first_person_pronoun",
    "question_mark",
    "digit_present",
    "punctuation_count",
    "prefix_overlap",
    "prefix_similarity",
    "capital_ratio",
    "exclamation",
    "greeting",
    "url_present",
    "reserved",
];

const FIRST_PERSON: [&str; 13] = [
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "i'm", "i've", "i'll", "i'd",
];
const GREETINGS: [&str; 8] = ["hello", "hi", "hey", "greetings", "howdy", "dear", "hiya", "yo"];
const DAY_PARTS: [&str; 4] = ["morning", "afternoon", "evening", "day"];

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("subject line is empty")]
    EmptyCandidate,
}

/// Dense slots plus sorted, merged hashed entries. Hashed indices are
/// relative to the start of the hashed block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dense: [f64; DENSE_DIM],
    pub hashed: Vec<(u32, f64)>,
}

impl Default for FeatureVector {
    fn default() -> Self {
        Self {
            dense: [0.0; DENSE_DIM],
            hashed: Vec::new(),
        }
    }
}

impl FeatureVector {
    pub fn get(&self, slot: Dense) -> f64 {
        self.dense[slot as usize]
    }

    pub fn word_count(&self) -> usize {
        (self.get(Dense::WordCount) * WORD_SCALE).round() as usize
    }

    pub fn char_count(&self) -> usize {
        (self.get(Dense::CharCount) * CHAR_SCALE).round() as usize
    }

    pub fn all_caps_word_count(&self) -> usize {
        (self.get(Dense::AllCapsWordCount) * CAPS_SCALE).round() as usize
    }

    pub fn punctuation_count(&self) -> usize {
        (self.get(Dense::PunctuationCount) * PUNCT_SCALE).round() as usize
    }

    /// Iterates `(index, value)` over the full feature dimension, skipping zeros.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .chain(self.hashed.iter().map(|(i, v)| (DENSE_DIM + *i as usize, *v)))
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), FEATURE_DIM);
        let dense: f64 = self.dense.iter().zip(weights).map(|(x, w)| x * w).sum();
        let hashed: f64 = self
            .hashed
            .iter()
            .map(|(i, v)| v * weights[DENSE_DIM + *i as usize])
            .sum();
        dense + hashed
    }

    /// `self - other`, with hashed entries merged and exact zeros removed.
    pub fn difference(&self, other: &FeatureVector) -> FeatureVector {
        let mut dense = [0.0; DENSE_DIM];
        for (d, (a, b)) in dense.iter_mut().zip(self.dense.iter().zip(other.dense.iter())) {
            *d = a - b;
        }
        let mut hashed = Vec::with_capacity(self.hashed.len() + other.hashed.len());
        let (mut i, mut j) = (0, 0);
        while i < self.hashed.len() || j < other.hashed.len() {
            let next = match (self.hashed.get(i), other.hashed.get(j)) {
                (Some(a), Some(b)) if a.0 == b.0 => {
                    i += 1;
                    j += 1;
                    (a.0, a.1 - b.1)
                }
                (Some(a), Some(b)) if a.0 < b.0 => {
                    i += 1;
                    *a
                }
                (Some(_), Some(b)) | (None, Some(b)) => {
                    j += 1;
                    (b.0, -b.1)
                }
                (Some(a), None) => {
                    i += 1;
                    *a
                }
                (None, None) => unreachable!(),
            };
            if next.1 != 0.0 {
                hashed.push(next);
            }
        }
        FeatureVector { dense, hashed }
    }
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Bucket (relative to the hashed block) and sign of a hashed token key.
pub fn hash_key(key: &str) -> (u32, f64) {
    let h = fnv64(key.as_bytes());
    let bucket = (h & (HASH_BUCKETS as u64 - 1)) as u32;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Full-dimension index and sign of a subject unigram, for planting or
/// inspecting token weights.
pub fn unigram_feature(word: &str) -> (usize, f64) {
    let (bucket, sign) = hash_key(&format!("u:{}", normalize_token(word)));
    (DENSE_DIM + bucket as usize, sign)
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32, 0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0xFE0F)
}

fn is_all_caps_word(token: &str) -> bool {
    let letters: Vec<char> = token.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

fn is_greeting(tokens: &[String]) -> bool {
    match tokens {
        [first, ..] if GREETINGS.contains(&first.as_str()) => true,
        [first, second, ..] => first == "good" && DAY_PARTS.contains(&second.as_str()),
        _ => false,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Deterministic features of `subject` in the context of `post`.
pub fn featurize(post: &str, subject: &str) -> Result<FeatureVector, FeatureError> {
    let subject = subject.trim();
    if subject.is_empty() {
        return Err(FeatureError::EmptyCandidate);
    }
    let words: Vec<&str> = subject.split_whitespace().filter(|t| !is_ellipsis_marker(t)).collect();
    let tokens: Vec<String> = words
        .iter()
        .map(|w| normalize_token(w))
        .filter(|t| !t.is_empty())
        .collect();

    let post_prefix: Vec<String> = post
        .split_whitespace()
        .take(PREFIX_WORDS)
        .map(normalize_token)
        .collect();
    let overlap = if tokens.is_empty() {
        0.0
    } else {
        tokens.iter().filter(|t| post_prefix.contains(t)).count() as f64 / tokens.len() as f64
    };
    let subject_norm = words.iter().map(|w| w.to_lowercase()).collect::<Vec<_>>().join(" ");
    let prefix_norm = post
        .split_whitespace()
        .take(words.len().clamp(1, PREFIX_WORDS))
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ");
    let similarity = strsim::normalized_levenshtein(&subject_norm, &prefix_norm);

    let letters = subject.chars().filter(|c| c.is_alphabetic()).count();
    let uppers = subject.chars().filter(|c| c.is_uppercase()).count();
    let lower = subject.to_lowercase();

    let mut dense = [0.0; DENSE_DIM];
    dense[Dense::WordCount as usize] = words.len() as f64 / WORD_SCALE;
    dense[Dense::CharCount as usize] = subject.chars().count() as f64 / CHAR_SCALE;
    dense[Dense::EndsWithEllipsis as usize] = flag(subject.ends_with("...") || subject.ends_with('…'));
    dense[Dense::EmojiPresent as usize] = flag(subject.chars().any(is_emoji));
    dense[Dense::AllCapsWordCount as usize] = words.iter().filter(|w| is_all_caps_word(w)).count() as f64 / CAPS_SCALE;
    dense[Dense::FirstPersonPronoun as usize] = flag(tokens.iter().any(|t| FIRST_PERSON.contains(&t.as_str())));
    dense[Dense::QuestionMark as usize] = flag(subject.contains('?'));
    dense[Dense::DigitPresent as usize] = flag(subject.chars().any(|c| c.is_ascii_digit()));
    dense[Dense::PunctuationCount as usize] = subject
        .chars()
        .filter(|c| c.is_ascii_punctuation() || *c == '…')
        .count() as f64
        / PUNCT_SCALE;
    dense[Dense::PrefixOverlap as usize] = overlap;
    dense[Dense::PrefixSimilarity as usize] = similarity;
    dense[Dense::CapitalRatio as usize] = if letters == 0 {
        0.0
    } else {
        uppers as f64 / letters as f64
    };
    dense[Dense::Exclamation as usize] = flag(subject.contains('!'));
    dense[Dense::Greeting as usize] = flag(is_greeting(&tokens));
    dense[Dense::UrlPresent as usize] =
        flag(lower.contains("http://") || lower.contains("https://") || lower.contains("www."));

    let mut hashed: Vec<(u32, f64)> = Vec::with_capacity(tokens.len() * 2);
    for t in &tokens {
        hashed.push(hash_key(&format!("u:{t}")));
    }
    for pair in tokens.windows(2) {
        hashed.push(hash_key(&format!("b:{} {}", pair[0], pair[1])));
    }
    hashed.sort_by_key(|(i, _)| *i);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(hashed.len());
    for (i, v) in hashed {
        match merged.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => merged.push((i, v)),
        }
    }
    merged.retain(|(_, v)| *v != 0.0);

    Ok(FeatureVector { dense, hashed: merged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caps_and_emoji() {
        let f = featurize("There was a break-in last night.", "CRIME ALERT in our area").unwrap();
        assert_eq!(f.all_caps_word_count(), 2);
        assert_eq!(f.get(Dense::EmojiPresent), 0.0);
        assert_eq!(f.get(Dense::FirstPersonPronoun), 1.0);
        assert_eq!(f.word_count(), 5);

        let f = featurize("Party", "Block party tonight 🎉").unwrap();
        assert_eq!(f.get(Dense::EmojiPresent), 1.0);
    }

    #[test]
    fn ellipsis_flag() {
        let f = featurize("Please keep your cars locked.", "Keep your cars locked at all times...").unwrap();
        assert_eq!(f.get(Dense::EndsWithEllipsis), 1.0);
        let f = featurize(
            "Please keep your cars locked.",
            "Please keep your cars locked at all times.",
        )
        .unwrap();
        assert_eq!(f.get(Dense::EndsWithEllipsis), 0.0);
    }

    #[test]
    fn prefix_identity() {
        let post = "Hi all, I left my phone at the coffee shop on Main street yesterday";
        let subject = post.split_whitespace().take(10).collect::<Vec<_>>().join(" ");
        let f = featurize(post, &subject).unwrap();
        assert_eq!(f.get(Dense::PrefixOverlap), 1.0);
        assert_eq!(f.get(Dense::PrefixSimilarity), 1.0);
        assert_eq!(f.get(Dense::Greeting), 1.0);
    }

    #[test]
    fn ranges_hold() {
        let f = featurize("x", "What?! 2 DOGS!!! https://example.com ... wow").unwrap();
        for (i, v) in f.dense.iter().enumerate() {
            assert!(v.is_finite() && *v >= 0.0, "slot {i} = {v}");
        }
        for slot in [Dense::PrefixOverlap, Dense::PrefixSimilarity, Dense::CapitalRatio] {
            assert!((0.0..=1.0).contains(&f.get(slot)));
        }
        assert_eq!(f.get(Dense::QuestionMark), 1.0);
        assert_eq!(f.get(Dense::DigitPresent), 1.0);
        assert_eq!(f.get(Dense::UrlPresent), 1.0);
        assert_eq!(f.get(Dense::Reserved), 0.0);
    }

    #[test]
    fn empty_subject_rejected() {
        assert_eq!(featurize("post", "   "), Err(FeatureError::EmptyCandidate));
    }

    #[test]
    fn hashed_entries_sorted_and_deterministic() {
        let a = featurize("p", "the dog and the other dog").unwrap();
        let b = featurize("p", "the dog and the other dog").unwrap();
        assert_eq!(a, b);
        assert!(a.hashed.windows(2).all(|w| w[0].0 < w[1].0));
        let (idx, sign) = unigram_feature("Dog!");
        let w: Vec<f64> = (0..FEATURE_DIM).map(|i| if i == idx { sign } else { 0.0 }).collect();
        assert_eq!(featurize("p", "dog").unwrap().dot(&w), 1.0);
    }

    #[test]
    fn difference_matches_dense_arithmetic() {
        let a = featurize("post text here", "Lost dog near park").unwrap();
        let b = featurize("post text here", "Found a dog 🐶").unwrap();
        let d = a.difference(&b);
        let w: Vec<f64> = (0..FEATURE_DIM).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        assert!((d.dot(&w) - (a.dot(&w) - b.dot(&w))).abs() < 1e-9);
        assert!(a.difference(&a).nonzeros().next().is_none());
    }
}
