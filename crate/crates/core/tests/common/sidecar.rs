//! In-process stand-in for an embedding sidecar.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forumqa::embeddings::{hash_embed, EmbedRequest, EmbedResponse, HealthResponse};
use parking_lot::Mutex;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behaviour {
    Normal,
    /// Dim changes after the first `/embed` response.
    Drift,
    /// Vectors contain strings.
    Garbage,
    Fail500,
}

pub struct Sidecar {
    pub addr: SocketAddr,
    pub dim: usize,
    pub behaviour: Mutex<Behaviour>,
    pub delay: Mutex<Duration>,
    pub requests: AtomicUsize,
    pub texts: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub peak: AtomicUsize,
}

impl Sidecar {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn set(&self, b: Behaviour) {
        *self.behaviour.lock() = b;
    }

    pub fn reset_counters(&self) {
        self.requests.store(0, Ordering::SeqCst);
        self.texts.store(0, Ordering::SeqCst);
        self.peak.store(0, Ordering::SeqCst);
    }
}

async fn health(State(s): State<Arc<Sidecar>>) -> Json<HealthResponse> {
    Json(HealthResponse { status: "ok".into(), dim: s.dim })
}

async fn embed(State(s): State<Arc<Sidecar>>, Json(req): Json<EmbedRequest>) -> Response {
    let n = s.requests.fetch_add(1, Ordering::SeqCst);
    s.texts.fetch_add(req.texts.len(), Ordering::SeqCst);
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.peak.fetch_max(now, Ordering::SeqCst);
    let delay = *s.delay.lock();
    if !delay.is_zero() {
        tokio::time::sleep(delay).await;
    }
    s.in_flight.fetch_sub(1, Ordering::SeqCst);

    let behaviour = *s.behaviour.lock();
    let dim = if behaviour == Behaviour::Drift && n > 0 { s.dim - 1 } else { s.dim };
    match behaviour {
        Behaviour::Fail500 => (StatusCode::INTERNAL_SERVER_ERROR, "boom").into_response(),
        Behaviour::Garbage => Json(json!({
            "provider_id": "mock",
            "dim": dim,
            "vectors": req.texts.iter().map(|_| vec!["x"; dim]).collect::<Vec<_>>(),
        }))
        .into_response(),
        _ => Json(EmbedResponse {
            provider_id: "mock".into(),
            dim,
            vectors: req
                .texts
                .iter()
                .map(|t| hash_embed(t, dim).unwrap().into_values())
                .collect(),
        })
        .into_response(),
    }
}

/// Start a sidecar on an ephemeral port; it lives until the process exits.
pub fn spawn(dim: usize) -> Arc<Sidecar> {
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    std_listener.set_nonblocking(true).unwrap();
    let state = Arc::new(Sidecar {
        addr: std_listener.local_addr().unwrap(),
        dim,
        behaviour: Mutex::new(Behaviour::Normal),
        delay: Mutex::new(Duration::ZERO),
        requests: AtomicUsize::new(0),
        texts: AtomicUsize::new(0),
        in_flight: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
    });
    let app = Router::new()
        .route("/health", get(health))
        .route("/embed", post(embed))
        .with_state(state.clone());
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(8).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    state
}
