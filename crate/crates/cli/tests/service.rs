mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use fusedstyle_cli::engine::{Engine, EnginePaths};
use fusedstyle_cli::service::{router, AppState, GenerateResponse, ServiceOptions};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn engine() -> Engine {
    let p = common::pipeline();
    Engine::load(&EnginePaths {
        model: p.root.join("model.ckpt"),
        scorer: p.root.join("scorer.ckpt"),
        vocab: p.root.join("vocab.txt"),
        lm: None,
        lm_weight: 0.5,
    })
    .unwrap()
}

fn app(loaded: bool) -> axum::Router {
    router(AppState::new(loaded.then(engine), ServiceOptions::default()))
}

async fn call(app: axum::Router, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn generate(app: axum::Router, body: Value) -> (StatusCode, Value) {
    call(app, "POST", "/generate", &body.to_string()).await
}

#[tokio::test]
async fn health_and_model_info() {
    let (s, v) = call(app(true), "GET", "/health", "").await;
    assert_eq!((s, v), (StatusCode::OK, json!({"status": "ok"})));
    let (s, v) = call(app(true), "GET", "/model-info", "").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["l"], 8);
    assert_eq!(v["variant"], "style_fusion");
    assert_eq!(v["model_id"].as_str().unwrap().len(), 64);
    assert!(v["vocab_size"].as_u64().unwrap() > 5);
}

#[tokio::test]
async fn zero_radius_gives_one_candidate() {
    let (s, v) = generate(
        app(true),
        json!({"context": "is the pizza good ?", "rho": 0.0, "lambda": 0.5, "n_candidates": 5, "seed": 1}),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let r: GenerateResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.candidates.len(), 1);
}

#[tokio::test]
async fn responses_are_ranked_and_scores_consistent() {
    for lambda in [0.0, 0.3, 1.0] {
        let (s, v) = generate(
            app(true),
            json!({"context": "what do you think about the game ?", "rho": 3.0, "lambda": lambda, "n_candidates": 40, "seed": 9}),
        )
        .await;
        assert_eq!(s, StatusCode::OK);
        let r: GenerateResponse = serde_json::from_value(v).unwrap();
        assert!(!r.candidates.is_empty());
        for w in r.candidates.windows(2) {
            assert!(w[0].score >= w[1].score);
            if lambda == 0.0 {
                assert!(w[0].relevance >= w[1].relevance);
            }
        }
        for c in &r.candidates {
            assert!((c.score - ((1.0 - lambda) * c.relevance + lambda * c.style_prob)).abs() < 1e-12);
        }
    }
}

#[tokio::test]
async fn same_request_and_seed_same_body() {
    let body = json!({"context": "hey dude <EOU> can you help me fix the car ?", "rho": 1.0, "lambda": 0.5, "n_candidates": 20, "seed": 4});
    let (_, mut a) = generate(app(true), body.clone()).await;
    let (_, mut b) = generate(app(true), body).await;
    a.as_object_mut().unwrap().remove("timing_ms");
    b.as_object_mut().unwrap().remove("timing_ms");
    assert_eq!(a, b);
}

#[tokio::test]
async fn towards_mode_is_accepted() {
    let (s, v) = generate(
        app(true),
        json!({"context": "is the pizza good ?", "rho": 1.0, "lambda": 0.5, "n_candidates": 3, "direction_sentence": "indeed the pizza is excellent"}),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["candidates"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn invalid_requests_get_machine_readable_reasons() {
    let cases = [
        (json!({"context": "hi", "rho": -0.1, "lambda": 0.5}), "invalid_rho"),
        (json!({"context": "hi", "rho": 0.5, "lambda": 1.5}), "invalid_lambda"),
        (
            json!({"context": "hi", "rho": 0.5, "lambda": 0.5, "n_candidates": 0}),
            "invalid_n_candidates",
        ),
        (
            json!({"context": "hi", "rho": 0.5, "lambda": 0.5, "n_candidates": 501}),
            "invalid_n_candidates",
        ),
        (json!({"context": "  ", "rho": 0.5, "lambda": 0.5}), "empty_context"),
        (json!({"context": "hi", "lambda": 0.5}), "invalid_json"),
    ];
    for (body, reason) in cases {
        let (s, v) = generate(app(true), body).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        assert_eq!(v["error"], reason);
    }
}

#[tokio::test]
async fn malformed_json_does_not_take_the_service_down() {
    let app = app(true);
    let (s, v) = call(app.clone(), "POST", "/generate", "{\"context\": ").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid_json");
    let (s, _) = call(
        app,
        "POST",
        "/generate",
        &json!({"context": "hi", "rho": 0.0, "lambda": 0.0}).to_string(),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn no_model_means_503() {
    let (s, v) = generate(app(false), json!({"context": "hi", "rho": 0.0, "lambda": 0.5})).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"], "model_not_loaded");
    let (s, _) = call(app(false), "GET", "/model-info", "").await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    let (s, _) = call(app(false), "GET", "/health", "").await;
    assert_eq!(s, StatusCode::OK);
}
