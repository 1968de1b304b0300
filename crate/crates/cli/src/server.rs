//! JSON-over-HTTP front end for the session store.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"prompt_set_id"?}` | session descriptor (201) |
//! | POST | `/sessions/{id}/messages` | `{"text", "idempotency_key"?}` | agent reply |
//! | GET | `/sessions/{id}/transcript` | | `{"session_id", "turns"}` |
//! | GET | `/sessions/{id}/indicators` | | trust indicators |
//! | GET | `/health` | | `{"status", "sessions"}` |

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use trustconv_core::dialog::Turn;
use trustconv_core::service::{ServiceError, SessionStore, DEFAULT_PROMPT_SET_ID};

/// Longest accepted respondent message, in bytes.
pub const MAX_MESSAGE_BYTES: usize = 10_000;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    prompt_set_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageRequest {
    text: String,
    idempotency_key: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TranscriptResponse {
    pub session_id: String,
    pub turns: Vec<Turn>,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Service(ServiceError),
    Internal(String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self::Service(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
            ApiError::Service(e) => {
                let (status, kind) = match &e {
                    ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
                    ServiceError::UnknownPromptSet(_) => (StatusCode::NOT_FOUND, "unknown_prompt_set"),
                    ServiceError::SessionClosed => (StatusCode::CONFLICT, "session_closed"),
                    _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
                };
                if status == StatusCode::INTERNAL_SERVER_ERROR {
                    log::error!("{e}");
                }
                (status, kind, e.to_string())
            }
        };
        (status, Json(json!({ "error": message, "kind": kind }))).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))
}

/// Runs a store call on the blocking pool, since every mutation syncs to disk.
async fn blocking<T, F>(store: &Arc<SessionStore>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, ServiceError> + Send + 'static,
{
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_session(State(store): State<Arc<SessionStore>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest = parse_body(&body)?;
    let id = req.prompt_set_id.unwrap_or_else(|| DEFAULT_PROMPT_SET_ID.to_string());
    let descriptor = blocking(&store, move |s| s.create_session(&id)).await?;
    Ok((StatusCode::CREATED, Json(descriptor)).into_response())
}

async fn post_message(
    State(store): State<Arc<SessionStore>>,
    Path(session_id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: MessageRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid JSON body: {e}")))?;
    if req.text.len() > MAX_MESSAGE_BYTES {
        return Err(ApiError::BadRequest(format!(
            "message exceeds {MAX_MESSAGE_BYTES} bytes"
        )));
    }
    let reply = blocking(&store, move |s| {
        s.post_message(&session_id, &req.text, req.idempotency_key.as_deref())
    })
    .await?;
    Ok(Json(reply).into_response())
}

async fn transcript(
    State(store): State<Arc<SessionStore>>,
    Path(session_id): Path<String>,
) -> Result<Response, ApiError> {
    let id = session_id.clone();
    let turns = blocking(&store, move |s| s.get_transcript(&id)).await?;
    Ok(Json(TranscriptResponse { session_id, turns }).into_response())
}

async fn indicators(
    State(store): State<Arc<SessionStore>>,
    Path(session_id): Path<String>,
) -> Result<Response, ApiError> {
    let indicators = blocking(&store, move |s| s.get_indicators(&session_id)).await?;
    Ok(Json(indicators).into_response())
}

async fn health(State(store): State<Arc<SessionStore>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "sessions": store.session_ids().len() }))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/indicators", get(indicators))
        .route("/health", get(health))
        .with_state(store)
}

/// Serves until Ctrl-C.
pub async fn serve(store: Arc<SessionStore>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
}
