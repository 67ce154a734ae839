//! HTTP front end: `POST /v1/select`, `GET /healthz`, `GET /metrics`.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;

use crate::candidate::Provenance;
use crate::generators::{
    BackoffConfig, ChatBackend, GeneratorSpec, HttpChatBackend, RemoteConfig, RemoteGenerator, Sleeper, TokioSleeper,
};
use crate::reward::{ModelError, ParamsHandle, RewardModelParams};
use crate::selector::{
    CacheError, SelectError, SelectionCache, Selector, SelectorConfig, SystemClock, DEFAULT_TTL_SECS,
};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid config: {source}")]
    Config {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("model {path}: {source}")]
    Model {
        path: String,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("remote client: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_addr: String,
    pub model_path: PathBuf,
    /// Candidates per post, the rule-based one included.
    pub n: usize,
    pub max_words: usize,
    pub backoff: BackoffConfig,
    pub cache_path: Option<PathBuf>,
    pub cache_ttl_secs: u64,
    pub remote: RemoteConfig,
    pub generator_version: String,
    pub specs: Vec<GeneratorSpec>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_addr: "127.0.0.1:8080".into(),
            model_path: PathBuf::from("reward_params.json"),
            n: 2,
            max_words: 10,
            backoff: BackoffConfig::default(),
            cache_path: None,
            cache_ttl_secs: DEFAULT_TTL_SECS,
            remote: RemoteConfig::default(),
            generator_version: "v1".into(),
            specs: vec![GeneratorSpec::base_extractor()],
        }
    }
}

impl ServiceConfig {
    /// Reads the JSON file and applies `ENGAGE_API_KEY` / `ENGAGE_BASE_URL`.
    pub fn load(path: &Path) -> Result<Self, ServeError> {
        let text = std::fs::read_to_string(path).map_err(|source| ServeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: Self = serde_json::from_str(&text).map_err(|source| ServeError::Config {
            path: path.display().to_string(),
            source,
        })?;
        config.remote.apply_env();
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ServeError> {
        if self.n == 0 {
            return Err(ServeError::Invalid("n must be >= 1".into()));
        }
        if self.max_words == 0 {
            return Err(ServeError::Invalid("max_words must be >= 1".into()));
        }
        if self.specs.is_empty() && self.n > 1 {
            return Err(ServeError::Invalid("n > 1 needs at least one generator spec".into()));
        }
        self.backoff
            .validate()
            .map_err(|e| ServeError::Invalid(e.to_string()))?;
        for spec in &self.specs {
            spec.validate().map_err(|e| ServeError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn selector_config(&self) -> SelectorConfig {
        SelectorConfig {
            n: self.n,
            max_words: self.max_words,
            generator_version: self.generator_version.clone(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub selector: Selector,
    pub params: Arc<ParamsHandle>,
    pub max_words: usize,
}

impl AppState {
    /// Wires the selector against `backend`; the HTTP client is used when
    /// `backend` is `None`.
    pub fn build(config: &ServiceConfig, backend: Option<Arc<dyn ChatBackend>>) -> Result<Self, ServeError> {
        config.validate()?;
        let params = RewardModelParams::load(&config.model_path).map_err(|source| ServeError::Model {
            path: config.model_path.display().to_string(),
            source,
        })?;
        let params = Arc::new(ParamsHandle::new(params));
        let backend = match backend {
            Some(b) => b,
            None => Arc::new(HttpChatBackend::new(&config.remote).map_err(|e| ServeError::Remote(e.to_string()))?),
        };
        Self::assemble(config, params, backend, Arc::new(TokioSleeper))
    }

    /// Like [`AppState::build`] with preloaded params and an explicit
    /// backoff sleeper.
    pub fn assemble(
        config: &ServiceConfig,
        params: Arc<ParamsHandle>,
        backend: Arc<dyn ChatBackend>,
        sleeper: Arc<dyn Sleeper>,
    ) -> Result<Self, ServeError> {
        config.validate()?;
        let generator = RemoteGenerator::new(backend, config.remote.model.clone(), config.backoff)
            .with_max_in_flight(config.remote.max_in_flight)
            .with_sleeper(sleeper);
        let cache = match &config.cache_path {
            Some(path) => SelectionCache::open(path, config.cache_ttl_secs, Arc::new(SystemClock))?,
            None => SelectionCache::in_memory(config.cache_ttl_secs),
        };
        let selector = Selector::new(
            config.selector_config(),
            Arc::new(cache),
            params.clone(),
            Some(Arc::new(generator)),
            config.specs.clone(),
        );
        Ok(Self {
            selector,
            params,
            max_words: config.max_words,
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SelectRequest {
    pub post_id: Option<String>,
    pub post_text: Option<String>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectResponse {
    pub post_id: String,
    pub subject: String,
    pub source: Provenance,
    pub score: Option<f64>,
    pub cached: bool,
    pub generator_version: String,
}

fn bad_request(code: &str, message: impl Into<String>) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": code, "message": message.into() })),
    )
        .into_response()
}

async fn handle_select(State(state): State<AppState>, body: Result<Json<SelectRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(rejection) => return bad_request("invalid_json", rejection.body_text()),
    };
    let Some(post_id) = req.post_id.filter(|id| !id.is_empty()) else {
        return bad_request("missing_post_id", "post_id is required");
    };
    let post_text = match req.post_text {
        None => return bad_request("missing_post_text", "post_text is required"),
        Some(t) if t.trim().is_empty() => return bad_request("empty_post_text", "post_text is empty"),
        Some(t) => t,
    };
    match state.selector.select_for_post(&post_id, &post_text, req.n).await {
        Ok(d) => Json(SelectResponse {
            post_id: d.post_id,
            subject: d.chosen.text,
            source: d.source,
            score: d.score,
            cached: d.cached,
            generator_version: d.generator_version,
        })
        .into_response(),
        Err(SelectError::EmptyPost) => bad_request("empty_post_text", "post_text is empty"),
        Err(SelectError::InvalidRequest(m)) => bad_request("invalid_request", m),
        Err(e) => {
            tracing::error!(error = %e, "selection failed");
            (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(json!({ "error": "internal", "message": e.to_string() })),
            )
                .into_response()
        }
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn metrics(State(state): State<AppState>) -> String {
    state.selector.metrics().snapshot().render_text()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/select", post(handle_select))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves, then
/// drains in-flight requests.
pub async fn serve_on(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `config.listen_addr` and serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServeError> {
    let state = AppState::build(config, None)?;
    let io = |source| ServeError::Io {
        path: config.listen_addr.clone(),
        source,
    };
    let listener = TcpListener::bind(&config.listen_addr).await.map_err(io)?;
    let addr: SocketAddr = listener.local_addr().map_err(io)?;
    tracing::info!(%addr, "serving");
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(io)
}
