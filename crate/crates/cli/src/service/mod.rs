//! HTTP session service: one model, many annotation sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/v1/sessions` | [`CreateSession`] | [`SessionInfo`] |
//! | GET | `/v1/sessions` | | `[SessionInfo]` |
//! | GET | `/v1/sessions/{id}` | | [`SessionInfo`] |
//! | DELETE | `/v1/sessions/{id}` | | 204 |
//! | POST | `/v1/sessions/{id}/predict` | [`PredictRequest`] | [`PredictResponse`] |
//! | POST | `/v1/sessions/{id}/accept` | [`AcceptRequest`] | [`AcceptResponse`] |
//! | POST | `/v1/sessions/{id}/export` | | [`ExportResponse`] |
//! | POST | `/v1/encode` | [`EncodeRequest`] | [`EncodeResponse`] |
//!
//! Errors are `{"error": "..."}` with status 404 for unknown sessions and
//! 422 for malformed or mis-shaped payloads.

pub mod store;
pub mod wire;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

use ctxseg_core::network::Model;
use ctxseg_core::{encode_interactions, stack_target, EncodedPrompts, DEFAULT_CLICK_RADIUS};

use store::{SessionStore, Working};
use wire::{
    unprocessable, AcceptRequest, AcceptResponse, CreateSession, EncodeRequest, EncodeResponse, ExportResponse,
    PredictRequest, PredictResponse, Raster, SessionInfo,
};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

pub struct AppState {
    pub model: Model,
    pub checkpoint: String,
    pub store: SessionStore,
}

impl AppState {
    pub fn open(model: Model, checkpoint: String, sessions_dir: &Path) -> anyhow::Result<Arc<Self>> {
        Ok(Arc::new(Self {
            model,
            checkpoint,
            store: SessionStore::open(sessions_dir)?,
        }))
    }
}

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/predict", post(predict))
        .route("/v1/sessions/{id}/accept", post(accept))
        .route("/v1/sessions/{id}/export", post(export))
        .route("/v1/encode", post(encode))
        .with_state(state)
}

async fn create_session(State(app): Shared, body: Option<Json<CreateSession>>) -> Result<Json<SessionInfo>, ApiError> {
    let task = body.map(|Json(b)| b.task).unwrap_or_default();
    let session = app.store.create(task, app.model.config().resolution, app.checkpoint.clone())?;
    Ok(Json(session.info()))
}

async fn list_sessions(State(app): Shared) -> Json<Vec<SessionInfo>> {
    Json(app.store.list())
}

async fn get_session(State(app): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SessionInfo>, ApiError> {
    Ok(Json(app.store.get(&id)?.info()))
}

async fn delete_session(State(app): Shared, UrlPath(id): UrlPath<String>) -> Result<StatusCode, ApiError> {
    app.store.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn predict(State(app): Shared, UrlPath(id): UrlPath<String>, Json(req): Json<PredictRequest>) -> Result<Json<PredictResponse>, ApiError> {
    let session = app.store.get(&id)?;
    let app2 = app.clone();
    tokio::task::spawn_blocking(move || {
        let start = Instant::now();
        let res = app2.model.config().resolution;
        let image = req.image.to_image(res, res)?;
        let state = req.interactions.to_state(res, res)?;
        let prompts = if state.is_empty() {
            EncodedPrompts::zeros(res, res)
        } else {
            encode_interactions(&state, DEFAULT_CLICK_RADIUS).map_err(unprocessable)?
        };
        let previous = if req.use_prev {
            let working = session.working.lock().expect("working lock");
            match working.as_ref() {
                Some(w) if w.image == image => Some(w.prediction.clone()),
                _ => return Err(ApiError::Unprocessable("no previous prediction for this image in the session".into())),
            }
        } else {
            None
        };
        let context = session.context();
        let target = stack_target(&image, &prompts, previous.as_ref()).map_err(unprocessable)?;
        let prediction = app2.model.predict(&target, &context).map_err(unprocessable)?;
        let mask = Raster::from_f32(prediction.probs.pixels());
        *session.working.lock().expect("working lock") = Some(Working {
            image,
            prediction: prediction.probs,
        });
        Ok(Json(PredictResponse {
            mask,
            height: res,
            width: res,
            context_size: context.len(),
            used_previous: previous.is_some(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
        }))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn accept(State(app): Shared, UrlPath(id): UrlPath<String>, Json(req): Json<AcceptRequest>) -> Result<Json<AcceptResponse>, ApiError> {
    let session = app.store.get(&id)?;
    let res = session.info().resolution;
    let image = req.image.to_image(res, res)?;
    let label = req.mask.to_hard_mask(res, res)?;
    let app2 = app.clone();
    let context_size = tokio::task::spawn_blocking(move || app2.store.accept(&session, image, label))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    tracing::info!(%id, context_size, "accepted");
    Ok(Json(AcceptResponse { context_size }))
}

async fn export(State(app): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<ExportResponse>, ApiError> {
    let session = app.store.get(&id)?;
    let (path, manifest) = app.store.export(&session)?;
    Ok(Json(ExportResponse {
        path: path.display().to_string(),
        manifest,
    }))
}

async fn encode(Json(req): Json<EncodeRequest>) -> Result<Json<EncodeResponse>, ApiError> {
    let state = req.interactions.to_state(req.height, req.width)?;
    let enc = encode_interactions(&state, DEFAULT_CLICK_RADIUS).map_err(unprocessable)?;
    Ok(Json(EncodeResponse {
        bbox: Raster::from_f32(enc.channel(0)),
        positive: Raster::from_f32(enc.channel(1)),
        negative: Raster::from_f32(enc.channel(2)),
    }))
}
