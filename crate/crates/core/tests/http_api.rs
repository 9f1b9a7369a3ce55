mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use forumqa::service::{router, AppState, QueryDefaults, QueryResponse, ServiceConfig, ThreadResponse};
use serde_json::{json, Value};
use tower::ServiceExt;

fn config() -> ServiceConfig {
    ServiceConfig {
        questions: Some(common::fixture("questions.tsv")),
        threads: Some(common::fixture("threads.tsv")),
        ..ServiceConfig::default()
    }
}

fn app() -> Router {
    let cfg = config();
    let (provider, snapshot) = cfg.open(false).unwrap();
    router(Arc::new(AppState::ready(cfg, provider, snapshot)))
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri).header(header::ORIGIN, "http://localhost:5173");
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, headers, bytes.to_vec())
}

async fn query(app: &Router, body: Value) -> (StatusCode, Vec<u8>) {
    let (s, _, b) = send(app, Method::POST, "/api/query", Some(&body.to_string())).await;
    (s, b)
}

#[tokio::test]
async fn query_returns_ranked_matches_above_threshold() {
    let app = app();
    let (status, body) = query(
        &app,
        json!({"title": "blender problem", "content": "blender stops responding when we move the robot using xbee", "threshold": 0.3}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let resp: QueryResponse = serde_json::from_slice(&body).unwrap();
    assert!(!resp.matches.is_empty() && resp.matches.len() <= 5);
    assert_eq!(resp.matches[0].query_id, "jdbjt4ko");
    assert!(resp.matches[0].thread_available);
    for (i, m) in resp.matches.iter().enumerate() {
        assert_eq!(m.rank, i + 1);
        assert!(m.scores.n_sim >= 0.3);
    }
    assert!(resp.matches.windows(2).all(|w| w[0].scores.n_sim >= w[1].scores.n_sim));
}

#[tokio::test]
async fn default_threshold_applies() {
    let app = app();
    let (_, body) = query(&app, json!({"title": "blender problem", "content": "blender stops responding"})).await;
    let resp: QueryResponse = serde_json::from_slice(&body).unwrap();
    assert!(resp.matches.iter().all(|m| m.scores.n_sim >= 0.70));
}

#[tokio::test]
async fn empty_title_yields_no_matches() {
    let app = app();
    let (status, body) = query(&app, json!({"title": ""})).await;
    assert_eq!(status, StatusCode::OK);
    let resp: QueryResponse = serde_json::from_slice(&body).unwrap();
    assert!(resp.matches.is_empty());
}

#[tokio::test]
async fn malformed_json_is_400() {
    let app = app();
    let (status, _, _) = send(&app, Method::POST, "/api/query", Some("{\"title\": ")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = query(&app, json!({"title": "x", "bogus": 1})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = query(&app, json!({"content": "no title"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn invalid_parameters_are_422() {
    let app = app();
    for body in [
        json!({"title": "x", "weights": {"p": 0.2, "q": 0.2, "r": 0.2}}),
        json!({"title": "x", "weights": {"p": -1.0, "q": 1.0, "r": 1.0}}),
        json!({"title": "x", "k": 0}),
        json!({"title": "x", "threshold": 1.5}),
        json!({"title": "x", "cascade": {"m": 0}}),
    ] {
        let (status, b) = query(&app, body.clone()).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        let err: Value = serde_json::from_slice(&b).unwrap();
        assert!(err["error"].is_string());
    }
}

#[tokio::test]
async fn uninitialized_state_is_503() {
    let app = router(Arc::new(AppState::new(config())));
    let (status, _) = query(&app, json!({"title": "x"})).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, _, _) = send(&app, Method::GET, "/api/thread/je32511i", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, _, _) = send(&app, Method::GET, "/api/health", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let (status, _, body) = send(&app, Method::POST, "/api/admin/reload", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["entries"], 12);
    let (status, _) = query(&app, json!({"title": "x"})).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn thread_endpoint_statuses() {
    let app = app();
    let (status, _, body) = send(&app, Method::GET, "/api/thread/je32511i", None).await;
    assert_eq!(status, StatusCode::OK);
    let t: ThreadResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(t.query_id, "je32511i");
    assert_eq!(t.posts.len(), 3);
    assert_eq!(t.posts[2].body, "Found it, thank you!");

    let (status, _, body) = send(&app, Method::GET, "/api/thread/je0td4d1", None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert!(body.is_empty());

    let (status, _, _) = send(&app, Method::GET, "/api/thread/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn responses_are_deterministic_apart_from_timing() {
    let app = app();
    let body = json!({"title": "float division error", "content": "moments give zero area", "threshold": 0.0, "k": 12});
    let (_, a) = query(&app, body.clone()).await;
    let (_, b) = query(&app, body).await;
    let a: QueryResponse = serde_json::from_slice(&a).unwrap();
    let b: QueryResponse = serde_json::from_slice(&b).unwrap();
    assert_eq!(a.matches, b.matches);
    assert_eq!(a.matches.len(), 12);
}

#[tokio::test]
async fn cors_allows_browser_origin() {
    let app = app();
    let (_, headers, _) = send(&app, Method::GET, "/api/config", None).await;
    assert_eq!(headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(), "*");

    let pre = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/query")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(pre).await.unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key(header::ACCESS_CONTROL_ALLOW_METHODS));
}

#[tokio::test]
async fn config_and_health_report_defaults() {
    let app = app();
    let (status, _, body) = send(&app, Method::GET, "/api/config", None).await;
    assert_eq!(status, StatusCode::OK);
    let d: QueryDefaults = serde_json::from_slice(&body).unwrap();
    assert_eq!(d.k, 5);
    assert_eq!(d.threshold, 0.70);
    assert_eq!((d.weights.p, d.weights.q, d.weights.r), (2.0, 1.0, 1.0));
    assert!(d.cascade.is_none());

    let (status, _, body) = send(&app, Method::GET, "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["entries"], 12);
    assert_eq!(v["dim"], 256);
    assert_eq!(v["fresh"], true);
}
