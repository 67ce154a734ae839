use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use super::{GenerationError, GenerationResult, GeneratorSpec};
use crate::metrics::Metrics;
use crate::pipeline::Source;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("rate limited (429)")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("server error {0}")]
    Server(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl RemoteError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Self::RateLimited | Self::Timeout | Self::Server(_) | Self::Transport(_)
        )
    }

    pub fn from_status(status: u16, body: String) -> Self {
        match status {
            429 => Self::RateLimited,
            408 => Self::Timeout,
            500..=599 => Self::Server(status),
            _ => Self::Rejected { status, body },
        }
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    /// Returns `choices[0].message.content` of one completion.
    async fn complete(&self, request: &ChatRequest) -> Result<String, RemoteError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Usually supplied through `ENGAGE_API_KEY` instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8081/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key: None,
            timeout_ms: 10_000,
            max_in_flight: 8,
        }
    }
}

impl RemoteConfig {
    /// Applies `ENGAGE_API_KEY` / `ENGAGE_BASE_URL` when set.
    pub fn apply_env(&mut self) {
        if let Ok(key) = std::env::var("ENGAGE_API_KEY") {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        if let Ok(url) = std::env::var("ENGAGE_BASE_URL") {
            if !url.is_empty() {
                self.base_url = url;
            }
        }
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct HttpChatBackend {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpChatBackend {
    pub fn new(config: &RemoteConfig) -> Result<Self, RemoteError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: config.completions_url(),
            api_key: config.api_key.clone(),
        })
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<String, RemoteError> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                RemoteError::Timeout
            } else {
                RemoteError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(RemoteError::from_status(status, body));
        }
        let parsed: CompletionResponse = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                RemoteError::Timeout
            } else {
                RemoteError::Malformed(e.to_string())
            }
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| RemoteError::Malformed("no choices".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackoffConfig {
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Fractional spread around each nominal delay.
    pub jitter: f64,
    pub max_attempts: u32,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        Self {
            base_delay_ms: 1000,
            factor: 2.0,
            jitter: 0.2,
            max_attempts: 5,
        }
    }
}

impl BackoffConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.factor.is_finite() && self.factor >= 1.0) {
            return Err(GenerationError::InvalidSpec(format!(
                "backoff factor {} must be >= 1",
                self.factor
            )));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(GenerationError::InvalidSpec(format!(
                "backoff jitter {} must be in [0, 1)",
                self.jitter
            )));
        }
        if self.max_attempts == 0 {
            return Err(GenerationError::InvalidSpec("max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    /// Nominal delay before attempt `k + 1`, i.e. after the `k`-th failure.
    pub fn nominal_delay(&self, k: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.factor.powi(k as i32 - 1);
        Duration::from_secs_f64(ms / 1000.0)
    }

    /// Upper bound on any single delay.
    pub fn max_delay(&self) -> Duration {
        self.nominal_delay(self.max_attempts.saturating_sub(1).max(1))
            .mul_f64(1.0 + self.jitter)
    }

    /// Jittered delay after the `k`-th failure; `u` in [-1, 1] picks the
    /// point within the jitter band. Never shorter than `previous`.
    pub fn delay(&self, k: u32, u: f64, previous: Duration) -> Duration {
        let d = self.nominal_delay(k).mul_f64(1.0 + self.jitter * u.clamp(-1.0, 1.0));
        d.max(previous)
    }
}

#[async_trait]
pub trait Sleeper: Send + Sync {
    async fn sleep(&self, duration: Duration);
}

pub struct TokioSleeper;

#[async_trait]
impl Sleeper for TokioSleeper {
    async fn sleep(&self, duration: Duration) {
        tokio::time::sleep(duration).await;
    }
}

/// Records requested delays without waiting.
#[derive(Debug, Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().unwrap().clone()
    }
}

#[async_trait]
impl Sleeper for RecordingSleeper {
    async fn sleep(&self, duration: Duration) {
        self.delays.lock().unwrap().push(duration);
    }
}

/// Remote generator: a chat backend behind retries and an in-flight cap.
pub struct RemoteGenerator {
    pub(super) backend: Arc<dyn ChatBackend>,
    model: String,
    backoff: BackoffConfig,
    sleeper: Arc<dyn Sleeper>,
    in_flight: Semaphore,
    jitter_rng: Mutex<ChaCha8Rng>,
    pub(super) metrics: Arc<Metrics>,
}

impl RemoteGenerator {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>, backoff: BackoffConfig) -> Self {
        Self {
            backend,
            model: model.into(),
            backoff,
            sleeper: Arc::new(TokioSleeper),
            in_flight: Semaphore::new(8),
            jitter_rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            metrics: Arc::new(Metrics::default()),
        }
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.in_flight = Semaphore::new(cap.max(1));
        self
    }

    pub fn with_jitter_seed(self, seed: u64) -> Self {
        *self.jitter_rng.lock().unwrap() = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn with_metrics(mut self, metrics: Arc<Metrics>) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    pub fn backoff(&self) -> &BackoffConfig {
        &self.backoff
    }

    /// One completion for `post`, retrying retryable failures with
    /// exponential backoff. `seed` is forwarded to the backend.
    pub async fn call_with_retries(
        &self,
        spec: &GeneratorSpec,
        post: &str,
        seed: Option<u64>,
    ) -> Result<GenerationResult, GenerationError> {
        spec.validate()?;
        self.backoff.validate()?;
        let request = ChatRequest {
            model: self.model.clone(),
            temperature: spec.temperature,
            max_tokens: spec.max_tokens,
            messages: spec.messages(post)?,
            seed,
        };
        let started = Instant::now();
        let mut previous = Duration::ZERO;
        let mut attempt = 1;
        loop {
            let outcome = {
                let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
                Metrics::incr(&self.metrics.remote_requests);
                self.backend.complete(&request).await
            };
            let err = match outcome {
                Ok(text) => {
                    return Ok(GenerationResult {
                        text,
                        source: Source::Generated,
                        attempts: attempt,
                        latency: started.elapsed(),
                    })
                }
                Err(e) => e,
            };
            if err == RemoteError::RateLimited {
                Metrics::incr(&self.metrics.rate_limit_errors);
            }
            if !err.is_retryable() {
                return Err(GenerationError::RemoteRejected(err));
            }
            if attempt >= self.backoff.max_attempts {
                tracing::warn!(attempts = attempt, error = %err, "remote generation exhausted retries");
                return Err(GenerationError::RetriesExhausted {
                    attempts: attempt,
                    last: err,
                });
            }
            let u: f64 = self.jitter_rng.lock().unwrap().gen_range(-1.0..=1.0);
            let delay = self.backoff.delay(attempt, u, previous);
            previous = delay;
            tracing::debug!(attempt, ?delay, error = %err, "retrying remote generation");
            self.sleeper.sleep(delay).await;
            attempt += 1;
        }
    }
}
