//! HTTP API and service configuration.
//!
//! | method | path                   | purpose                                 |
//! |--------|------------------------|-----------------------------------------|
//! | POST   | `/api/query`           | rank archived questions for a new one   |
//! | GET    | `/api/thread/{id}`     | answer thread of a matched question     |
//! | GET    | `/api/health`          | readiness and index shape               |
//! | GET    | `/api/config`          | query defaults, for the UI's controls   |
//! | POST   | `/api/admin/reload`    | reload KB + index, swap atomically      |
//!
//! Handlers never mutate the active snapshot; reload builds a new one and
//! swaps it in, and requests already running finish on the old one.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::embeddings::{EmbeddingProvider, HashEmbedder, PrecomputedProvider, RemoteConfig, RemoteProvider, WordVectorProvider, DEFAULT_HASH_DIM};
use crate::error::{Error, Result};
use crate::index_store::{build_index, load_index, save_index, EmbeddingIndex};
use crate::kb::{build_knowledge_base, AuthorRole, KnowledgeBase};
use crate::retrieval::{rank, Cascade, Mode, Query, RankedMatch, Snapshot, SnapshotCell, DEFAULT_K, DEFAULT_PREFILTER, DEFAULT_THRESHOLD};
use crate::simcore::Weights;

pub const CONFIG_ENV: &str = "QA_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderSpec {
    Hash { dim: usize },
    /// Vectors from the index file; only archived texts can be embedded.
    Precomputed,
    Remote { url: String },
    WordVectors { path: PathBuf },
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Hash { dim: DEFAULT_HASH_DIM }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub questions: Option<PathBuf>,
    pub threads: Option<PathBuf>,
    /// JSON snapshot written by `ingest`; used instead of `questions`/`threads` when set.
    pub kb: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub provider: ProviderSpec,
    pub weights: Weights,
    pub k: usize,
    pub threshold: f64,
    pub mode: Mode,
    pub cascade: bool,
    pub cascade_m: usize,
    pub listen: String,
    /// `*` or one origin allowed by CORS.
    pub cors_origin: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            questions: None,
            threads: None,
            kb: None,
            index: None,
            provider: ProviderSpec::default(),
            weights: Weights::default(),
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            mode: Mode::Weighted,
            cascade: false,
            cascade_m: DEFAULT_PREFILTER,
            listen: "127.0.0.1:8080".into(),
            cors_origin: "*".into(),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl ServiceConfig {
    /// Parse `key=value` lines. Blank lines and `#` comments are ignored;
    /// relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = ServiceConfig::default();
        let mut provider_kind = "hash".to_string();
        let mut hash_dim = DEFAULT_HASH_DIM;
        let mut remote_url = None;
        let mut word_vectors = None;
        let (mut p, mut q, mut r) = (cfg.weights.p, cfg.weights.q, cfg.weights.r);
        let path = |v: &str| base.join(v);

        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "questions" => cfg.questions = Some(path(value)),
                "threads" => cfg.threads = Some(path(value)),
                "kb" => cfg.kb = Some(path(value)),
                "index" => cfg.index = Some(path(value)),
                "provider" => provider_kind = value.to_string(),
                "hash_dim" => hash_dim = parse_num(key, value)?,
                "remote_url" => remote_url = Some(value.to_string()),
                "word_vectors" => word_vectors = Some(path(value)),
                "p" => p = parse_num(key, value)?,
                "q" => q = parse_num(key, value)?,
                "r" => r = parse_num(key, value)?,
                "k" => cfg.k = parse_num(key, value)?,
                "threshold" => cfg.threshold = parse_num(key, value)?,
                "mode" => cfg.mode = value.parse().map_err(Error::Config)?,
                "cascade" => cfg.cascade = parse_bool(key, value)?,
                "cascade_m" => cfg.cascade_m = parse_num(key, value)?,
                "listen" => cfg.listen = value.to_string(),
                "cors_origin" => cfg.cors_origin = value.to_string(),
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        cfg.weights = Weights { p, q, r };
        cfg.provider = match provider_kind.as_str() {
            "hash" => ProviderSpec::Hash { dim: hash_dim },
            "precomputed" => ProviderSpec::Precomputed,
            "remote" => ProviderSpec::Remote {
                url: remote_url.ok_or_else(|| Error::Config("provider=remote needs remote_url".into()))?,
            },
            "word" => ProviderSpec::WordVectors {
                path: word_vectors.ok_or_else(|| Error::Config("provider=word needs word_vectors".into()))?,
            },
            other => return Err(Error::Config(format!("unknown provider {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Config from the file named by `QA_CONFIG`, if set.
    pub fn from_env() -> Result<Option<Self>> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(PathBuf::from(p)).map(Some),
            None => Ok(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if self.k == 0 || self.cascade_m == 0 {
            return Err(Error::Config("k and cascade_m must be >= 1".into()));
        }
        if let ProviderSpec::Hash { dim } = self.provider {
            HashEmbedder::new(dim)?;
        }
        Ok(())
    }

    pub fn query_defaults(&self) -> QueryDefaults {
        QueryDefaults {
            k: self.k,
            threshold: self.threshold,
            weights: self.weights,
            mode: self.mode,
            cascade: self.cascade.then_some(CascadeBody { m: self.cascade_m }),
        }
    }

    pub fn load_kb(&self) -> Result<KnowledgeBase> {
        match (&self.kb, &self.questions) {
            (Some(snapshot), _) => KnowledgeBase::load_json(snapshot),
            (None, Some(q)) => build_knowledge_base(q, self.threads.as_deref()),
            (None, None) => Err(Error::Config("set kb= or questions= to locate the knowledge base".into())),
        }
    }

    /// The query-side provider. `index` is needed for the precomputed kind.
    pub fn make_provider(&self, kb: &KnowledgeBase, index: Option<&EmbeddingIndex>) -> Result<Arc<dyn EmbeddingProvider>> {
        Ok(match &self.provider {
            ProviderSpec::Hash { dim } => Arc::new(HashEmbedder::new(*dim)?),
            ProviderSpec::Precomputed => {
                let index = index.ok_or_else(|| Error::Config("provider=precomputed needs an existing index".into()))?;
                Arc::new(PrecomputedProvider::new(kb, index))
            }
            ProviderSpec::Remote { url } => Arc::new(RemoteProvider::connect(url, RemoteConfig::default())?),
            ProviderSpec::WordVectors { path } => Arc::new(WordVectorProvider::load(path)?),
        })
    }

    /// Load KB and index and assemble a snapshot. A missing index file is
    /// built and saved; a stale or incomplete one is rebuilt only when
    /// `rebuild_stale` is set, otherwise it is an error.
    pub fn open(&self, rebuild_stale: bool) -> Result<(Arc<dyn EmbeddingProvider>, Snapshot)> {
        let kb = self.load_kb()?;
        let index_path = self.index.as_ref();
        let existing = match index_path {
            Some(p) if p.exists() => Some(load_index(p)?),
            _ => None,
        };
        let provider = self.make_provider(&kb, existing.as_ref())?;
        let index = match existing {
            Some(idx) if idx.freshness(&kb).is_fresh() && idx.provider_id() == provider.provider_id() => idx,
            Some(idx) if !rebuild_stale => {
                return Err(Error::Consistency(format!(
                    "index {} does not match the knowledge base or provider {} (built by {}); run `index` again",
                    index_path.unwrap().display(),
                    provider.provider_id(),
                    idx.provider_id()
                )))
            }
            _ => {
                let idx = build_index(&kb, provider.as_ref())?;
                if let Some(p) = index_path {
                    save_index(&idx, p)?;
                }
                idx
            }
        };
        let snapshot = Snapshot::new(Arc::new(kb), Arc::new(index))?;
        Ok((provider, snapshot))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeBody {
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDefaults {
    pub k: usize,
    pub threshold: f64,
    pub weights: Weights,
    pub mode: Mode,
    pub cascade: Option<CascadeBody>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub title: String,
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tags: Option<BTreeSet<String>>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub weights: Option<Weights>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub cascade: Option<CascadeBody>,
    #[serde(default)]
    pub tag_filter: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub t_sim: f64,
    pub h_sim: f64,
    pub c_sim: f64,
    pub n_sim: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jaccard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchBody {
    pub query_id: String,
    pub rank: usize,
    pub title: String,
    pub scores: Scores,
    pub thread_available: bool,
}

impl From<&RankedMatch> for MatchBody {
    fn from(m: &RankedMatch) -> Self {
        let b = m.breakdown;
        Self {
            query_id: m.query_id.clone(),
            rank: m.rank,
            title: m.title.clone(),
            scores: Scores {
                t_sim: b.t_sim,
                h_sim: b.h_sim,
                c_sim: b.c_sim,
                n_sim: b.n_sim,
                jaccard: b.jaccard,
            },
            thread_available: m.thread_available,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub matches: Vec<MatchBody>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostBody {
    pub author_role: AuthorRole,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadResponse {
    pub query_id: String,
    pub posts: Vec<PostBody>,
}

/// Shared state behind the router.
pub struct AppState {
    snapshot: SnapshotCell,
    provider: RwLock<Option<Arc<dyn EmbeddingProvider>>>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            snapshot: SnapshotCell::default(),
            provider: RwLock::new(None),
            config,
        }
    }

    pub fn ready(config: ServiceConfig, provider: Arc<dyn EmbeddingProvider>, snapshot: Snapshot) -> Self {
        let state = Self::new(config);
        state.install(provider, snapshot);
        state
    }

    pub fn install(&self, provider: Arc<dyn EmbeddingProvider>, snapshot: Snapshot) {
        *self.provider.write() = Some(provider);
        self.snapshot.store(snapshot);
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.load()
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn engine(&self) -> Option<(Arc<dyn EmbeddingProvider>, Arc<Snapshot>)> {
        Some((self.provider.read().clone()?, self.snapshot.load()?))
    }

    /// Translate a request body into a query plus weights, using config defaults.
    pub fn build_query(&self, req: QueryRequest) -> Result<(Query, Weights)> {
        let d = &self.config;
        let weights = req.weights.unwrap_or(d.weights);
        weights.validate()?;
        let mut q = Query::new(req.title, req.content);
        q.tags = req.tags.unwrap_or_default();
        q.k = req.k.unwrap_or(d.k);
        q.threshold = req.threshold.unwrap_or(d.threshold);
        q.mode = req.mode.unwrap_or(d.mode);
        q.tag_filter = req.tag_filter.unwrap_or(false);
        q.cascade = match req.cascade {
            Some(c) => Some(Cascade { prefilter_size: c.m }),
            None if d.cascade => Some(Cascade { prefilter_size: d.cascade_m }),
            None => None,
        };
        q.validate()?;
        Ok((q, weights))
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::Schema(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::Transport(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::Protocol(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn uninitialized() -> ApiError {
    ApiError(StatusCode::SERVICE_UNAVAILABLE, "index not loaded".into())
}

async fn handle_query(State(state): State<Arc<AppState>>, body: Bytes) -> std::result::Result<Json<QueryResponse>, ApiError> {
    let start = Instant::now();
    let req: QueryRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))?;
    let (query, weights) = state.build_query(req)?;
    let (provider, snapshot) = state.engine().ok_or_else(uninitialized)?;
    let matches = tokio::task::spawn_blocking(move || rank(&snapshot, provider.as_ref(), &query, &weights))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(QueryResponse {
        matches: matches.iter().map(MatchBody::from).collect(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
    }))
}

async fn handle_thread(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> std::result::Result<Response, ApiError> {
    let snapshot = state.snapshot().ok_or_else(uninitialized)?;
    match snapshot.kb().thread(&id)? {
        None => Ok(StatusCode::NO_CONTENT.into_response()),
        Some(t) => Ok(Json(ThreadResponse {
            query_id: t.query_id.clone(),
            posts: t
                .posts
                .iter()
                .map(|p| PostBody {
                    author_role: p.author_role,
                    body: p.body.clone(),
                })
                .collect(),
        })
        .into_response()),
    }
}

async fn handle_health(State(state): State<Arc<AppState>>) -> Response {
    match state.snapshot() {
        Some(s) => Json(json!({
            "status": "ok",
            "entries": s.len(),
            "provider": s.index().provider_id(),
            "dim": s.index().dim(),
            "fresh": s.freshness().is_fresh(),
        }))
        .into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "uninitialized" }))).into_response(),
    }
}

async fn handle_config(State(state): State<Arc<AppState>>) -> Json<QueryDefaults> {
    Json(state.config.query_defaults())
}

async fn handle_reload(State(state): State<Arc<AppState>>) -> std::result::Result<Json<serde_json::Value>, ApiError> {
    let worker = state.clone();
    let (provider, snapshot) = tokio::task::spawn_blocking(move || worker.config.open(true))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let entries = snapshot.len();
    state.install(provider, snapshot);
    Ok(Json(json!({ "status": "reloaded", "entries": entries })))
}

fn cors(origin: &str) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match origin {
        "*" | "" => layer.allow_origin(Any),
        o => match HeaderValue::from_str(o) {
            Ok(v) => layer.allow_origin(v),
            Err(_) => layer.allow_origin(Any),
        },
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let origin = state.config.cors_origin.clone();
    Router::new()
        .route("/api/query", post(handle_query))
        .route("/api/thread/{id}", get(handle_thread))
        .route("/api/health", get(handle_health))
        .route("/api/config", get(handle_config))
        .route("/api/admin/reload", post(handle_reload))
        .layer(cors(&origin))
        .with_state(state)
}

/// Bind and serve until ctrl-c.
pub async fn serve(state: Arc<AppState>) -> Result<()> {
    let addr: SocketAddr = state
        .config
        .listen
        .parse()
        .map_err(|_| Error::Config(format!("bad listen address {:?}", state.config.listen)))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(format!("tcp://{addr}"), e))?;
    tracing::info!(%addr, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(format!("tcp://{addr}"), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_config_file() {
        let text = "# service\nquestions = data/q.tsv\nindex=cache.idx\nprovider=hash\nhash_dim=128\np=3\nq=1\nr=1\nk=3\nthreshold=0.6\ncascade=on\ncascade_m=20\nmode=weighted\n";
        let cfg = ServiceConfig::parse(text, Path::new("/srv")).unwrap();
        assert_eq!(cfg.questions, Some(PathBuf::from("/srv/data/q.tsv")));
        assert_eq!(cfg.provider, ProviderSpec::Hash { dim: 128 });
        assert_eq!(cfg.weights, Weights { p: 3.0, q: 1.0, r: 1.0 });
        assert_eq!((cfg.k, cfg.threshold, cfg.cascade, cfg.cascade_m), (3, 0.6, true, 20));
    }

    #[test]
    fn rejects_bad_config() {
        let base = Path::new(".");
        assert!(ServiceConfig::parse("p=0.2\nq=0.2\nr=0.2", base).is_err());
        assert!(ServiceConfig::parse("threshold=1.2", base).is_err());
        assert!(ServiceConfig::parse("colour=blue", base).is_err());
        assert!(ServiceConfig::parse("provider=remote", base).is_err());
        assert!(ServiceConfig::parse("just words", base).is_err());
        assert!(ServiceConfig::parse("provider=remote\nremote_url=http://x", base).is_ok());
    }
}
