//! Local chat-completions endpoint backed by the simulated generator, with
//! scripted failures for exercising the retry path over real HTTP.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::llm::SimulatedLlm;
use crate::generators::{ChatBackend, ChatRequest, RemoteError};

/// Which requests the endpoint refuses, and with what status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    Never,
    Always {
        status: u16,
    },
    /// The first `count` requests fail, later ones succeed.
    First {
        count: u64,
        status: u16,
    },
}

struct EndpointState {
    llm: SimulatedLlm,
    failure: FailureMode,
    requests: AtomicU64,
}

pub struct MockEndpoint {
    addr: SocketAddr,
    state: Arc<EndpointState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

async fn complete(State(state): State<Arc<EndpointState>>, Json(request): Json<ChatRequest>) -> Response {
    let n = state.requests.fetch_add(1, Ordering::SeqCst);
    let fail = match state.failure {
        FailureMode::Never => None,
        FailureMode::Always { status } => Some(status),
        FailureMode::First { count, status } => (n < count).then_some(status),
    };
    if let Some(status) = fail {
        let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        return (code, Json(json!({ "error": { "message": "scripted failure" } }))).into_response();
    }
    match state.llm.complete(&request).await {
        Ok(text) => Json(json!({
            "object": "chat.completion",
            "model": request.model,
            "choices": [{ "index": 0, "message": { "role": "assistant", "content": text }, "finish_reason": "stop" }],
        }))
        .into_response(),
        Err(RemoteError::Rejected { status, body }) => {
            let code = StatusCode::from_u16(status).unwrap_or(StatusCode::BAD_REQUEST);
            (code, Json(json!({ "error": { "message": body } }))).into_response()
        }
        Err(e) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": { "message": e.to_string() } })),
        )
            .into_response(),
    }
}

impl MockEndpoint {
    /// Binds an ephemeral localhost port and serves until dropped or shut down.
    pub async fn start(failure: FailureMode) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(EndpointState {
            llm: SimulatedLlm::new(),
            failure,
            requests: AtomicU64::new(0),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(complete))
            .with_state(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL for [`crate::generators::RemoteConfig::base_url`].
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Requests received, failed ones included.
    pub fn requests(&self) -> u64 {
        self.state.requests.load(Ordering::SeqCst)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        if self.shutdown.is_some() {
            self.task.abort();
        }
    }
}
