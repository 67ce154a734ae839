//! Best-of-N selection behind a two-level single-flight cache, with a
//! rule-based fallback, plus offline best-of-N and score-lift evaluation.

mod cache;
mod offline;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use futures::future::{BoxFuture, FutureExt, Shared};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::{Provenance, SubjectLineCandidate};
use crate::generators::{rule_based_subject, GenerationError, GeneratorSpec, RemoteGenerator};
use crate::metrics::Metrics;
use crate::reward::{ModelError, RewardScorer, ScorerSource};

pub use cache::{CacheEntry, CacheError, CacheKey, Clock, ManualClock, SelectionCache, SystemClock, DEFAULT_TTL_SECS};
pub use offline::{
    best_of_n_ratios, offline_best_of_n_eval, score_lift, score_lift_from_scores, BestOfNRow, ScoreLift,
};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("post text is empty")]
    EmptyPost,
    #[error("invalid candidate pool: {0}")]
    InvalidPool(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Candidates for one post; always holds exactly one rule-based candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub post_id: String,
    pub post_text: String,
    pub candidates: Vec<SubjectLineCandidate>,
    pub generator_version: String,
}

impl CandidatePool {
    /// Rule candidate first, then generated texts in order, dropping any
    /// that repeat an earlier text.
    pub fn new(
        post_id: impl Into<String>,
        post_text: impl Into<String>,
        rule: impl Into<String>,
        generated: impl IntoIterator<Item = String>,
        generator_version: impl Into<String>,
    ) -> Self {
        let mut candidates = vec![SubjectLineCandidate::rule(rule)];
        for text in generated {
            if !candidates.iter().any(|c| c.text == text) {
                candidates.push(SubjectLineCandidate::generated(text));
            }
        }
        Self {
            post_id: post_id.into(),
            post_text: post_text.into(),
            candidates,
            generator_version: generator_version.into(),
        }
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        let rules = self.candidates.iter().filter(|c| c.source == Provenance::Rule).count();
        if rules != 1 {
            return Err(SelectError::InvalidPool(format!(
                "{rules} rule-based candidates, expected 1"
            )));
        }
        if self.candidates.iter().any(|c| c.source == Provenance::Fallback) {
            return Err(SelectError::InvalidPool(
                "fallback candidates do not belong in a pool".into(),
            ));
        }
        Ok(())
    }

    pub fn rule(&self) -> &SubjectLineCandidate {
        self.candidates
            .iter()
            .find(|c| c.source == Provenance::Rule)
            .expect("validated pool")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub post_id: String,
    pub chosen: SubjectLineCandidate,
    pub source: Provenance,
    /// One score per pool candidate, in pool order.
    pub scores: Vec<f64>,
    pub score: Option<f64>,
    pub cached: bool,
    pub generator_version: String,
    /// Seconds since the Unix epoch at decision time.
    pub timestamp: u64,
}

/// Scores every candidate and picks the highest. An exact tie with the
/// rule-based candidate goes to the rule; among generated candidates the
/// earliest wins.
pub fn select_best(scorer: &dyn RewardScorer, pool: &CandidatePool) -> Result<SelectionDecision, SelectError> {
    pool.validate()?;
    let scores = pool
        .candidates
        .iter()
        .map(|c| scorer.score(&pool.post_text, &c.text))
        .collect::<Result<Vec<_>, _>>()?;
    let rule_idx = pool
        .candidates
        .iter()
        .position(|c| c.source == Provenance::Rule)
        .expect("validated pool");
    let mut best = rule_idx;
    for (i, s) in scores.iter().enumerate() {
        if i != rule_idx && *s > scores[best] {
            best = i;
        }
    }
    let chosen = pool.candidates[best].clone();
    Ok(SelectionDecision {
        post_id: pool.post_id.clone(),
        source: chosen.source,
        chosen,
        score: Some(scores[best]),
        scores,
        cached: false,
        generator_version: pool.generator_version.clone(),
        timestamp: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// Pool size including the rule-based candidate.
    pub n: usize,
    pub max_words: usize,
    pub generator_version: String,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            n: 2,
            max_words: 10,
            generator_version: "v1".into(),
        }
    }
}

type Flight = Shared<BoxFuture<'static, Arc<SelectionDecision>>>;

struct Inner {
    config: SelectorConfig,
    cache: Arc<SelectionCache>,
    scorer: Arc<dyn ScorerSource>,
    generator: Option<Arc<RemoteGenerator>>,
    specs: Vec<GeneratorSpec>,
    metrics: Arc<Metrics>,
    inflight: Mutex<HashMap<CacheKey, Flight>>,
}

/// Online selection: get-or-compute per `(post_id, generator_version)`.
#[derive(Clone)]
pub struct Selector {
    inner: Arc<Inner>,
}

impl Selector {
    /// Without a generator every pool is rule-only. Metrics are shared with
    /// the generator when there is one.
    pub fn new(
        config: SelectorConfig,
        cache: Arc<SelectionCache>,
        scorer: Arc<dyn ScorerSource>,
        generator: Option<Arc<RemoteGenerator>>,
        specs: Vec<GeneratorSpec>,
    ) -> Self {
        let metrics = generator.as_ref().map(|g| g.metrics().clone()).unwrap_or_default();
        Self {
            inner: Arc::new(Inner {
                config,
                cache,
                scorer,
                generator,
                specs,
                metrics,
                inflight: Mutex::new(HashMap::new()),
            }),
        }
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.inner.metrics
    }

    pub fn cache(&self) -> &Arc<SelectionCache> {
        &self.inner.cache
    }

    pub fn config(&self) -> &SelectorConfig {
        &self.inner.config
    }

    fn key(&self, post_id: &str) -> CacheKey {
        CacheKey::new(post_id, self.inner.config.generator_version.clone())
    }

    /// Selects a subject for the post. Concurrent calls for one key share a
    /// single computation; a cached winner comes back with `cached = true`.
    /// Generation or scoring failures yield the rule-based subject with
    /// source `fallback`, which is never cached. `n` overrides the
    /// configured pool size for a cold key.
    pub async fn select_for_post(
        &self,
        post_id: &str,
        post_text: &str,
        n: Option<usize>,
    ) -> Result<SelectionDecision, SelectError> {
        if post_text.trim().is_empty() {
            return Err(SelectError::EmptyPost);
        }
        let n = n.unwrap_or(self.inner.config.n);
        if n == 0 {
            return Err(SelectError::InvalidRequest("n must be >= 1".into()));
        }
        let key = self.key(post_id);
        let (flight, joined) = {
            let mut inflight = self.inner.inflight.lock().unwrap();
            if let Some(mut d) = self.inner.cache.decision(&key) {
                drop(inflight);
                Metrics::incr(&self.inner.metrics.cache_hits_l2);
                d.cached = true;
                self.inner.record(&d);
                return Ok(d);
            }
            match inflight.get(&key) {
                Some(f) => (f.clone(), true),
                None => {
                    let inner = self.inner.clone();
                    let (k, id, text) = (key.clone(), post_id.to_string(), post_text.to_string());
                    let fut: Flight = async move {
                        let decision = Arc::new(inner.compute(&k, &id, &text, n).await);
                        inner.inflight.lock().unwrap().remove(&k);
                        decision
                    }
                    .boxed()
                    .shared();
                    inflight.insert(key.clone(), fut.clone());
                    (fut, false)
                }
            }
        };
        let mut d = (*flight.await).clone();
        if joined && d.source != Provenance::Fallback {
            Metrics::incr(&self.inner.metrics.cache_hits_l2);
            d.cached = true;
        }
        self.inner.record(&d);
        Ok(d)
    }

    /// Level-1 get-or-generate: the distinct postprocessed generated texts
    /// for a post, without scoring.
    pub async fn candidates_for_post(&self, post_id: &str, post_text: &str) -> Result<Vec<String>, GenerationError> {
        if post_text.trim().is_empty() {
            return Err(GenerationError::EmptyPost);
        }
        let key = self.key(post_id);
        self.inner.level_one(&key, post_text, self.inner.config.n).await
    }
}

impl Inner {
    fn record(&self, d: &SelectionDecision) {
        Metrics::incr(&self.metrics.selections_total);
        match d.source {
            Provenance::Generated => Metrics::incr(&self.metrics.selections_generated),
            Provenance::Rule => Metrics::incr(&self.metrics.selections_rule),
            Provenance::Fallback => Metrics::incr(&self.metrics.fallbacks),
        }
    }

    async fn level_one(&self, key: &CacheKey, post_text: &str, n: usize) -> Result<Vec<String>, GenerationError> {
        if let Some(entry) = self.cache.get(key) {
            Metrics::incr(&self.metrics.cache_hits_l1);
            return Ok(entry.candidates);
        }
        let texts = match &self.generator {
            Some(g) if n > 1 => g
                .generate_candidates(&self.specs, post_text, n - 1, self.config.max_words)
                .await?
                .into_iter()
                .map(|r| r.text)
                .collect(),
            _ => Vec::new(),
        };
        if let Err(e) = self.cache.put_candidates(key, texts.clone()) {
            tracing::warn!(error = %e, "could not persist candidates");
        }
        Ok(texts)
    }

    async fn compute(&self, key: &CacheKey, post_id: &str, post_text: &str, n: usize) -> SelectionDecision {
        let rule = rule_based_subject(post_text, self.config.max_words).expect("post checked non-empty");
        let scorer = self.scorer.current();
        let now = self.cache.now_secs();
        let outcome = match self.level_one(key, post_text, n).await {
            Ok(texts) => {
                let pool = CandidatePool::new(
                    post_id,
                    post_text,
                    rule.clone(),
                    texts.clone(),
                    &self.config.generator_version,
                );
                select_best(scorer.as_ref(), &pool)
                    .map(|d| (d, texts))
                    .map_err(|e| e.to_string())
            }
            Err(e) => Err(e.to_string()),
        };
        match outcome {
            Ok((mut decision, texts)) => {
                decision.timestamp = now;
                if let Err(e) = self.cache.put_decision(key, texts, decision.clone()) {
                    tracing::warn!(error = %e, "could not persist decision");
                }
                decision
            }
            Err(reason) => {
                tracing::warn!(post_id, %reason, "serving rule-based fallback");
                let score = scorer.score(post_text, &rule).ok();
                SelectionDecision {
                    post_id: post_id.to_string(),
                    chosen: SubjectLineCandidate::rule(rule),
                    source: Provenance::Fallback,
                    scores: score.into_iter().collect(),
                    score,
                    cached: false,
                    generator_version: self.config.generator_version.clone(),
                    timestamp: now,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Table(HashMap<String, f64>);

    impl RewardScorer for Table {
        fn score(&self, _: &str, s: &str) -> Result<f64, ModelError> {
            Ok(self.0.get(s).copied().unwrap_or(0.0))
        }
    }

    fn table(entries: &[(&str, f64)]) -> Table {
        Table(entries.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    fn pool(rule: &str, generated: &[&str]) -> CandidatePool {
        CandidatePool::new("p", "post", rule, generated.iter().map(|s| s.to_string()), "v1")
    }

    #[test]
    fn argmax_picks_generated() {
        let d = select_best(&table(&[("r", 0.3), ("g", 0.7)]), &pool("r", &["g"])).unwrap();
        assert_eq!((d.chosen.text.as_str(), d.source), ("g", Provenance::Generated));
        assert_eq!(d.score, Some(0.7));
    }

    #[test]
    fn tie_goes_to_rule() {
        let d = select_best(&table(&[("r", 0.5), ("g", 0.5)]), &pool("r", &["g"])).unwrap();
        assert_eq!(d.source, Provenance::Rule);
    }

    #[test]
    fn rule_only_pool() {
        let d = select_best(&table(&[("r", -2.0)]), &pool("r", &[])).unwrap();
        assert_eq!((d.chosen.text.as_str(), d.source), ("r", Provenance::Rule));
    }

    #[test]
    fn pool_drops_duplicates_of_rule() {
        let p = pool("Same", &["Same", "Other", "Other"]);
        assert_eq!(p.candidates.len(), 2);
        p.validate().unwrap();
        let mut bad = p.clone();
        bad.candidates.push(SubjectLineCandidate::rule("x"));
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn chosen_score_is_pool_max(scores in proptest::collection::vec(-5.0f64..5.0, 1..12)) {
            let names: Vec<String> = (0..scores.len()).map(|i| format!("c{i}")).collect();
            let t = Table(names.iter().cloned().zip(scores.iter().copied()).collect());
            let p = CandidatePool::new("p", "post", names[0].clone(), names[1..].to_vec(), "v1");
            let d = select_best(&t, &p).unwrap();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(d.score, Some(max));
            prop_assert!(p.candidates.contains(&d.chosen));
        }
    }
}
