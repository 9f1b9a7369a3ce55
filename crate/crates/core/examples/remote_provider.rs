//! Talk to an embedding sidecar over HTTP (`POST /embed`, `GET /health`).
//!
//! With a URL argument the example uses that server. Without one it starts
//! a small local sidecar backed by the hashing embedder.
//!
//! ```text
//! cargo run --example remote_provider -- http://127.0.0.1:9000
//! ```

use axum::routing::{get, post};
use axum::{Json, Router};
use forumqa::embeddings::{hash_embed, EmbedRequest, EmbedResponse, EmbeddingProvider, HealthResponse, RemoteConfig, RemoteProvider};
use forumqa::prelude::*;

const DIM: usize = 384;

async fn health() -> Json<HealthResponse> {
    Json(HealthResponse { status: "ok".into(), dim: DIM })
}

async fn embed(Json(req): Json<EmbedRequest>) -> Json<EmbedResponse> {
    Json(EmbedResponse {
        provider_id: "local-hash-sidecar".into(),
        dim: DIM,
        vectors: req.texts.iter().map(|t| hash_embed(t, DIM).unwrap().into_values()).collect(),
    })
}

fn local_sidecar() -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").expect("bind");
    listener.set_nonblocking(true).expect("nonblocking");
    let url = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        tokio::runtime::Runtime::new().unwrap().block_on(async move {
            let app = Router::new().route("/health", get(health)).route("/embed", post(embed));
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        })
    });
    url
}

fn main() -> forumqa::Result<()> {
    let url = std::env::args().nth(1).unwrap_or_else(local_sidecar);
    let provider = RemoteProvider::connect(&url, RemoteConfig::default())?;
    println!("connected to {} as {} (dim {})", provider.endpoint(), provider.provider_id(), provider.dim());

    let kb = KnowledgeBase::from_entries([
        KbEntry::new("a1", "Blender crashes with xbee", "Blender stops responding when the robot moves"),
        KbEntry::new("a2", "Float division by zero", "Zero area contour when computing moments"),
    ]);
    let index = build_index(&kb, &provider)?;
    let snapshot = Snapshot::new(kb.into(), index.into())?;
    let query = Query::new("blender not responding", "robot moves and blender hangs").threshold(0.0);
    for m in rank(&snapshot, &provider, &query, &Weights::default())? {
        println!("#{} {} n_sim={:.3}", m.rank, m.query_id, m.breakdown.n_sim);
    }
    Ok(())
}
