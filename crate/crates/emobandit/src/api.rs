//! JSON-over-HTTP interface to the session store.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/sessions` | `{user_id, k?, mapping?, config?}` |
//! | POST | `/sessions/{id}/command` | `{command}` |
//! | POST | `/sessions/{id}/feedback` | `{label, vector}` or `{label, frames, fps?, stride?}` |
//! | GET | `/sessions/{id}/state` | |
//! | POST | `/sessions/{id}/complete` | |
//! | POST | `/sessions/{id}/abandon` | |
//! | GET | `/sessions/{id}/export` | JSONL log |
//! | GET | `/sessions` | |
//! | GET | `/health` | |
//!
//! Errors are `{"code": ..., "message": ...}`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use emobandit_core::emotion::DEFAULT_FPS;
use emobandit_core::{
    ActionId, CommandActionMapping, CommandId, EmotionVector, FrameSequence, Label, NamedEmotions,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::log::{SessionConfig, SessionStatus, STUDY_ACTIONS};
use crate::session::{SessionError, SessionSnapshot};
use crate::store::{SessionStore, StoreError};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "bad_request", message: message.into() }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError::*;
        let status = match e {
            SessionNotActive | FeedbackPending | NoPendingRound | RoundLimitReached(_)
            | IncompleteSession => StatusCode::CONFLICT,
            Divergence { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError { status, code: e.code(), message: e.to_string() }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => {
                ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: e.to_string() }
            }
            StoreError::Session(s) => s.into(),
            StoreError::Io(_) => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                code: "storage_error",
                message: e.to_string(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    user_id: String,
    #[serde(default = "default_k")]
    k: usize,
    mapping: Option<Vec<u32>>,
    #[serde(default)]
    config: SessionConfig,
}

fn default_k() -> usize {
    3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandRequest {
    command: u32,
}

#[derive(Serialize)]
struct CommandResponse {
    round: u32,
    command: CommandId,
    action: ActionId,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_name: Option<String>,
    state: SessionSnapshot,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    label: Label,
    vector: Option<NamedEmotions>,
    frames: Option<Vec<NamedEmotions>>,
    fps: Option<f64>,
    stride: Option<usize>,
}

#[derive(Serialize)]
struct FeedbackResponse {
    round: u32,
    reward: f64,
    mean: EmotionVector,
    state: SessionSnapshot,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list(State(store): State<Arc<SessionStore>>) -> impl IntoResponse {
    Json(store.list())
}

async fn create(State(store): State<Arc<SessionStore>>, body: Bytes) -> ApiResult<Response> {
    let mut req: CreateRequest = parse(&body)?;
    if req.k == STUDY_ACTIONS.len() && req.config.action_names.is_empty() {
        req.config.action_names = STUDY_ACTIONS.iter().map(|s| s.to_string()).collect();
    }
    let mapping = match req.mapping {
        Some(m) => Some(
            CommandActionMapping::from_numbers(&m)
                .map_err(|e| SessionError::InvalidMapping(e.to_string()))?,
        ),
        None => None,
    };
    let snapshot = store.create(&req.user_id, req.k, mapping, req.config)?;
    Ok((StatusCode::CREATED, Json(snapshot)).into_response())
}

async fn command(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<CommandResponse>> {
    let req: CommandRequest = parse(&body)?;
    let state = store.issue_command(&id, req.command)?;
    let pending = state.pending.expect("a command was just issued");
    Ok(Json(CommandResponse {
        round: pending.round,
        command: pending.command,
        action: pending.action,
        action_name: state.config.action_names.get(pending.action.index()).cloned(),
        state,
    }))
}

async fn feedback(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<FeedbackResponse>> {
    let req: FeedbackRequest = parse(&body)?;
    let frames = match (req.vector, req.frames) {
        (Some(v), None) => {
            if req.stride.is_some() || req.fps.is_some() {
                return Err(ApiError::bad_request("fps and stride only apply to `frames`"));
            }
            FrameSequence::single(EmotionVector::try_from(v).map_err(SessionError::from)?)
        }
        (None, Some(raw)) => {
            let session_stride = store.with_record(&id, |r| r.config.reward.stride)?;
            if let Some(given) = req.stride.filter(|&s| s != session_stride) {
                return Err(SessionError::StrideMismatch { given, session: session_stride }.into());
            }
            let frames = raw
                .into_iter()
                .map(EmotionVector::try_from)
                .collect::<Result<Vec<_>, _>>()
                .map_err(SessionError::from)?;
            FrameSequence::new(frames, req.fps.unwrap_or(DEFAULT_FPS), session_stride)
                .map_err(SessionError::from)?
        }
        _ => return Err(ApiError::bad_request("exactly one of `vector` or `frames` is required")),
    };
    let state = store.submit_feedback(&id, frames, req.label)?;
    let last = state.trace.last().expect("feedback was just applied");
    let (round, reward, mean) = (last.round, last.reward.0, last.mean);
    Ok(Json(FeedbackResponse { round, reward, mean, state }))
}

async fn state(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSnapshot>> {
    Ok(Json(store.snapshot(&id)?))
}

async fn complete(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSnapshot>> {
    Ok(Json(store.set_status(&id, SessionStatus::Completed)?))
}

async fn abandon(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSnapshot>> {
    Ok(Json(store.set_status(&id, SessionStatus::Abandoned)?))
}

async fn export(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Response> {
    let body = store.export(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(store: Arc<SessionStore>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list).post(create))
        .route("/sessions/{id}/command", post(command))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/complete", post(complete))
        .route("/sessions/{id}/abandon", post(abandon))
        .route("/sessions/{id}/export", get(export))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}
