use std::collections::HashSet;

use futures::future::join_all;

use super::{postprocess, GenerationError, GenerationResult, GeneratorSpec, RemoteGenerator, Strategy};
use crate::metrics::Metrics;

impl RemoteGenerator {
    /// Generates `n` candidates for `post` and returns the distinct ones, in
    /// sample order, postprocessed to at most `max_words` words.
    ///
    /// `SamePrompt` takes one spec and samples it `n` times; `MultiPrompt`
    /// takes exactly `n` specs and asks each once. Individual failures are
    /// dropped; if every sample fails the batch fails.
    pub async fn generate_candidates(
        &self,
        specs: &[GeneratorSpec],
        post: &str,
        n: usize,
        max_words: usize,
    ) -> Result<Vec<GenerationResult>, GenerationError> {
        if post.trim().is_empty() {
            return Err(GenerationError::EmptyPost);
        }
        if n == 0 {
            return Err(GenerationError::InvalidSpec("n must be >= 1".into()));
        }
        let Some(first) = specs.first() else {
            return Err(GenerationError::InvalidSpec("no generator specs".into()));
        };
        if specs.iter().any(|s| s.strategy != first.strategy) {
            return Err(GenerationError::InvalidSpec("specs disagree on strategy".into()));
        }
        let plan: Vec<&GeneratorSpec> = match first.strategy {
            Strategy::SamePrompt => {
                if specs.len() != 1 {
                    return Err(GenerationError::InvalidSpec(format!(
                        "same_prompt takes one spec, got {}",
                        specs.len()
                    )));
                }
                if n > 1 && first.temperature <= 0.0 {
                    return Err(GenerationError::InvalidSpec(
                        "sampling n > 1 needs temperature > 0".into(),
                    ));
                }
                vec![first; n]
            }
            Strategy::MultiPrompt => {
                if specs.len() != n {
                    return Err(GenerationError::InvalidSpec(format!(
                        "multi_prompt needs one spec per candidate: {} specs for n = {n}",
                        specs.len()
                    )));
                }
                specs.iter().collect()
            }
        };
        for spec in specs {
            spec.validate()?;
        }
        Metrics::incr(&self.metrics.remote_calls);

        let calls = plan.iter().enumerate().map(|(i, spec)| async move {
            let mut r = self.call_with_retries(spec, post, Some(i as u64)).await?;
            r.text = postprocess(&r.text, max_words)?;
            Ok::<_, GenerationError>(r)
        });
        let outcomes = join_all(calls).await;

        let attempted = outcomes.len();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut first_error = None;
        for outcome in outcomes {
            match outcome {
                Ok(r) => {
                    if seen.insert(r.text.clone()) {
                        out.push(r);
                    }
                }
                Err(e) => {
                    tracing::debug!(error = %e, "candidate generation failed");
                    first_error.get_or_insert(e);
                }
            }
        }
        match (out.is_empty(), first_error) {
            (true, Some(first)) => Err(GenerationError::AllCandidatesFailed {
                attempted,
                first: Box::new(first),
            }),
            _ => Ok(out),
        }
    }
}
