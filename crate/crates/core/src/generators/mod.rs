//! Subject line candidates: the rule-based extractor, a retrying
//! chat-completions client, and completion cleanup.

mod candidates;
mod postprocess;
mod remote;
mod rule;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Source;
use crate::templates::{self, placeholder_count, TemplateError, BASE_GENERATOR_TEMPLATE, POLICY_TEMPLATE};

pub use postprocess::postprocess;
pub use remote::{
    BackoffConfig, ChatBackend, ChatMessage, ChatRequest, HttpChatBackend, RecordingSleeper, RemoteConfig, RemoteError,
    RemoteGenerator, Sleeper, TokioSleeper,
};
pub use rule::rule_based_subject;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("post text is empty")]
    EmptyPost,
    #[error("candidate is empty after postprocessing")]
    EmptyCandidate,
    #[error("remote generator rejected the request: {0}")]
    RemoteRejected(RemoteError),
    #[error("remote generator still failing after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: RemoteError },
    #[error("all {attempted} candidate generations failed; first error: {first}")]
    AllCandidatesFailed {
        attempted: usize,
        first: Box<GenerationError>,
    },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Sample several completions from a single prompt.
    SamePrompt,
    /// One completion per prompt template.
    MultiPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub template_id: String,
    #[serde(default)]
    pub system: Option<String>,
    /// User message with a single `{post}` placeholder.
    pub user_template: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub strategy: Strategy,
}

impl GeneratorSpec {
    /// The prompted base generator with the full extraction requirements.
    pub fn base_extractor() -> Self {
        Self {
            template_id: "base_extractor".into(),
            system: None,
            user_template: BASE_GENERATOR_TEMPLATE.into(),
            temperature: 0.8,
            max_tokens: 40,
            strategy: Strategy::SamePrompt,
        }
    }

    /// The short prompt used with a fine-tuned policy model.
    pub fn policy() -> Self {
        Self {
            template_id: "policy".into(),
            system: None,
            user_template: POLICY_TEMPLATE.into(),
            temperature: 0.8,
            max_tokens: 40,
            strategy: Strategy::SamePrompt,
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let slots = placeholder_count(&self.user_template, "post");
        if slots != 1 {
            return Err(TemplateError::PlaceholderCount {
                name: "post".into(),
                count: slots,
            }
            .into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GenerationError::InvalidSpec(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GenerationError::InvalidSpec("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    pub fn messages(&self, post: &str) -> Result<Vec<ChatMessage>, GenerationError> {
        let mut out = Vec::with_capacity(2);
        if let Some(system) = &self.system {
            out.push(ChatMessage {
                role: "system".into(),
                content: system.clone(),
            });
        }
        let user = templates::render(&self.user_template, &[("post", post)])?;
        out.push(ChatMessage {
            role: "user".into(),
            content: user,
        });
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub text: String,
    pub source: Source,
    pub attempts: u32,
    pub latency: Duration,
}
