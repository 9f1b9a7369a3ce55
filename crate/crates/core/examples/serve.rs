//! Serve the HTTP API over the sample archive.
//!
//! ```text
//! cargo run --example serve -- 127.0.0.1:8080
//! curl -s localhost:8080/api/query -H 'content-type: application/json' \
//!      -d '{"title":"blender problem","content":"blender hangs","threshold":0.3}'
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use forumqa::service::{serve, AppState, ServiceConfig};

#[tokio::main]
async fn main() -> forumqa::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = ServiceConfig {
        questions: Some(fixtures.join("questions.tsv")),
        threads: Some(fixtures.join("threads.tsv")),
        listen: std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()),
        ..ServiceConfig::default()
    };
    let (provider, snapshot) = config.open(false)?;
    println!("serving {} questions on http://{}", snapshot.len(), config.listen);
    serve(Arc::new(AppState::ready(config, provider, snapshot))).await
}
