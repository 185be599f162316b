//! HTTP inference service: `POST /generate`, `GET /health`, `GET /model-info`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fusedstyle_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{Candidate, Engine, Query};

pub const MAX_CANDIDATES: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    /// Utterances separated by ` <EOU> `.
    pub context: String,
    pub rho: f64,
    pub lambda: f64,
    #[serde(default)]
    pub direction_sentence: Option<String>,
    #[serde(default = "default_candidates")]
    pub n_candidates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_candidates() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub candidates: Vec<Candidate>,
    pub model_id: String,
    pub timing_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub l: usize,
    pub vocab_size: usize,
    pub variant: Option<String>,
}

/// Decoding limits applied to every request.
#[derive(Clone, Copy, Debug)]
pub struct ServiceOptions {
    pub sigma: f64,
    pub max_len: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            sigma: 0.1,
            max_len: 30,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    engine: Option<Arc<Engine>>,
    opts: ServiceOptions,
}

impl AppState {
    pub fn new(engine: Option<Engine>, opts: ServiceOptions) -> Self {
        AppState {
            engine: engine.map(Arc::new),
            opts,
        }
    }
}

/// Error body: `{"error": <reason>, "message": <detail>}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: &'static str,
    message: String,
}

impl ApiError {
    fn bad(reason: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            reason,
            message: message.into(),
        }
    }

    fn no_model() -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            reason: "model_not_loaded",
            message: "no model is loaded".into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.reason, "message": self.message})),
        )
            .into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/generate", post(generate))
        .route("/health", get(health))
        .route("/model-info", get(model_info))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn model_info(State(state): State<AppState>) -> Result<Json<ModelInfo>, ApiError> {
    let e = state.engine.as_ref().ok_or_else(ApiError::no_model)?;
    Ok(Json(ModelInfo {
        model_id: e.model_id.clone(),
        l: e.model.latent_dim(),
        vocab_size: e.vocab.len(),
        variant: e.variant.clone(),
    }))
}

fn validate(req: &GenerateRequest) -> Result<(), ApiError> {
    if !(req.rho >= 0.0 && req.rho.is_finite()) {
        return Err(ApiError::bad(
            "invalid_rho",
            format!("rho must be finite and >= 0, got {}", req.rho),
        ));
    }
    if !(0.0..=1.0).contains(&req.lambda) {
        return Err(ApiError::bad(
            "invalid_lambda",
            format!("lambda must lie in [0, 1], got {}", req.lambda),
        ));
    }
    if !(1..=MAX_CANDIDATES).contains(&req.n_candidates) {
        return Err(ApiError::bad(
            "invalid_n_candidates",
            format!(
                "n_candidates must lie in [1, {MAX_CANDIDATES}], got {}",
                req.n_candidates
            ),
        ));
    }
    if req.context.split_whitespace().next().is_none() {
        return Err(ApiError::bad("empty_context", "context is empty"));
    }
    Ok(())
}

async fn generate(State(state): State<AppState>, body: Bytes) -> Result<Json<GenerateResponse>, ApiError> {
    let req: GenerateRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad("invalid_json", e.to_string()))?;
    validate(&req)?;
    let engine = state.engine.clone().ok_or_else(ApiError::no_model)?;
    let query = Query {
        context: req.context,
        rho: req.rho,
        lambda: req.lambda,
        direction_sentence: req.direction_sentence,
        n_candidates: req.n_candidates,
        seed: req.seed.unwrap_or_else(rand::random),
        sigma: state.opts.sigma,
        max_len: state.opts.max_len,
    };
    let start = Instant::now();
    let result = tokio::task::spawn_blocking(move || engine.generate(&query).map(|c| (c, engine.model_id.clone())))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            reason: "internal_error",
            message: e.to_string(),
        })?;
    match result {
        Ok((cands, model_id)) => Ok(Json(GenerateResponse {
            candidates: cands.into_iter().map(|(c, _)| c).collect(),
            model_id,
            timing_ms: start.elapsed().as_millis() as u64,
        })),
        Err(Error::DegenerateDirection) => Err(ApiError::bad(
            "degenerate_direction",
            Error::DegenerateDirection.to_string(),
        )),
        Err(e) if e.is_user_error() => Err(ApiError::bad("invalid_request", e.to_string())),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            reason: "internal_error",
            message: e.to_string(),
        }),
    }
}

/// Serves until interrupted.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
