//! Client for encoders served out of process.
//!
//! Wire protocol:
//!
//! ```text
//! POST /embed   {"texts": ["...", ...]}
//!            -> {"provider_id": "...", "dim": N, "vectors": [[...], ...]}
//! GET  /health  -> {"status": "ok", "dim": N}
//! ```
//!
//! The first successful response pins the provider id and dim; any later
//! response that disagrees is a consistency error, not a retryable one.

use std::sync::OnceLock;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{embed_texts, EmbeddingProvider, EmbeddingVector, Field, Granularity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub provider_id: String,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub timeout: Duration,
    /// Upper bound on concurrent `/embed` requests from one provider.
    pub max_in_flight: usize,
    /// Texts per `/embed` request.
    pub batch_size: usize,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    pub granularity: Granularity,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
            batch_size: 64,
            retries: 2,
            granularity: Granularity::Sentence,
        }
    }
}

#[derive(Debug, Clone)]
struct Pinned {
    provider_id: String,
    dim: usize,
}

struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock();
            while *free == 0 {
                self.cv.wait(&mut free);
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock() += 1;
        self.cv.notify_one();
        out
    }
}

pub struct RemoteProvider {
    base: String,
    placeholder_id: String,
    agent: ureq::Agent,
    config: RemoteConfig,
    pinned: OnceLock<Pinned>,
    gate: Gate,
}

impl std::fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("base", &self.base)
            .field("pinned", &self.pinned.get())
            .finish()
    }
}

impl RemoteProvider {
    /// Create a client without touching the network. Id and dim stay unknown
    /// until the first response arrives; prefer [`RemoteProvider::connect`].
    pub fn new(endpoint: &str, config: RemoteConfig) -> Self {
        let base = endpoint
            .trim_end_matches('/')
            .trim_end_matches("/embed")
            .trim_end_matches("/health")
            .to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self {
            placeholder_id: format!("remote:{base}"),
            base,
            agent,
            gate: Gate::new(config.max_in_flight),
            config,
            pinned: OnceLock::new(),
        }
    }

    /// Create a client and pin provider id and dim from the server.
    pub fn connect(endpoint: &str, config: RemoteConfig) -> Result<Self> {
        let p = Self::new(endpoint, config);
        let health = p.health()?;
        if health.status != "ok" {
            return Err(Error::Transport(format!(
                "{} reports status {:?}",
                p.base, health.status
            )));
        }
        p.embed_many(&[""])?;
        let pinned = p.pinned.get().expect("pinned by first response");
        if pinned.dim != health.dim {
            return Err(Error::Consistency(format!(
                "/health advertises dim {} but /embed returned dim {}",
                health.dim, pinned.dim
            )));
        }
        Ok(p)
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<HealthResponse> {
        let url = format!("{}/health", self.base);
        self.with_retries(|| {
            let mut resp = self.agent.get(&url).call().map_err(classify)?;
            resp.body_mut().read_json::<HealthResponse>().map_err(classify)
        })
    }

    /// Raw vectors for `texts`, in order. Large inputs are split into
    /// batches sent concurrently, at most `max_in_flight` at a time.
    pub fn embed_many(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let batches: Vec<Vec<Vec<f64>>> = texts
            .par_chunks(self.config.batch_size.max(1))
            .map(|chunk| self.gate.run(|| self.post_embed(chunk)))
            .collect::<Result<_>>()?;
        Ok(batches.into_iter().flatten().collect())
    }

    fn post_embed(&self, chunk: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embed", self.base);
        let body = EmbedRequest {
            texts: chunk.iter().map(|s| s.to_string()).collect(),
        };
        let resp: EmbedResponse = self.with_retries(|| {
            let mut resp = self.agent.post(&url).send_json(&body).map_err(classify)?;
            resp.body_mut().read_json::<EmbedResponse>().map_err(classify)
        })?;
        self.check(&resp, chunk.len())?;
        Ok(resp.vectors)
    }

    fn check(&self, resp: &EmbedResponse, expected: usize) -> Result<()> {
        if resp.dim == 0 {
            return Err(Error::Protocol("server reported dim 0".into()));
        }
        if resp.vectors.len() != expected {
            return Err(Error::Protocol(format!(
                "sent {expected} texts, got {} vectors",
                resp.vectors.len()
            )));
        }
        if let Some(v) = resp.vectors.iter().find(|v| v.len() != resp.dim) {
            return Err(Error::Protocol(format!(
                "vector of length {} in a dim {} response",
                v.len(),
                resp.dim
            )));
        }
        let pinned = self.pinned.get_or_init(|| Pinned {
            provider_id: resp.provider_id.clone(),
            dim: resp.dim,
        });
        if pinned.dim != resp.dim || pinned.provider_id != resp.provider_id {
            return Err(Error::Consistency(format!(
                "remote provider changed from {}/{} to {}/{}",
                pinned.provider_id, pinned.dim, resp.provider_id, resp.dim
            )));
        }
        Ok(())
    }

    fn with_retries<T>(&self, mut f: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match f() {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    attempt += 1;
                    tracing::warn!(attempt, error = %e, "retrying embedding request");
                    std::thread::sleep(Duration::from_millis(50 << attempt.min(5)));
                }
                other => return other,
            }
        }
    }
}

fn classify(err: ureq::Error) -> Error {
    match err {
        ureq::Error::StatusCode(code) if code >= 500 => {
            Error::Transport(format!("server answered {code}"))
        }
        ureq::Error::StatusCode(code) => Error::Protocol(format!("server answered {code}")),
        ureq::Error::Json(e) => Error::Protocol(format!("malformed response body: {e}")),
        other => Error::Transport(other.to_string()),
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn provider_id(&self) -> &str {
        self.pinned
            .get()
            .map_or(&self.placeholder_id, |p| &p.provider_id)
    }

    fn dim(&self) -> usize {
        self.pinned.get().map_or(0, |p| p.dim)
    }

    fn granularity(&self) -> Granularity {
        self.config.granularity
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.embed_many(texts)
    }
}

/// One-shot call against `endpoint`. An empty input makes no request.
pub fn remote_embed(endpoint: &str, texts: &[&str], field: Field) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let provider = RemoteProvider::new(endpoint, RemoteConfig::default());
    embed_texts(&provider, texts, field)
}
