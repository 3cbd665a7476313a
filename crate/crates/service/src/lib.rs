//! HTTP service for live multi-session chat with a persona agent.
//!
//! Sessions belong to a dialogue. Turns run the configured strategy against
//! the dialogue's memory, and closing a session compresses it into memory.

mod error;
mod state;

use std::collections::BTreeMap;
use std::path::PathBuf;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use ppa_core::memory::EntryView;
use ppa_core::pipeline::StrategyConfig;
use ppa_core::providers::{ProviderIdentities, Providers};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use error::{ApiError, ErrorBody};
pub use state::{AppState, CloseSummary, LiveSession, SessionStatus, Speakers, TurnView};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    /// Where pools and session state persist; in-memory only when `None`.
    pub store_dir: Option<PathBuf>,
    /// Static files served under `/` (the browser client build).
    pub static_dir: Option<PathBuf>,
    /// Also extract facts about the human side of the conversation when a
    /// session closes.
    pub extract_user_facts: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            store_dir: None,
            static_dir: None,
            extract_user_facts: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub dialogue_id: String,
    pub speakers: Speakers,
    #[serde(default)]
    pub personas: BTreeMap<String, Vec<String>>,
    #[serde(default = "StrategyConfig::ppa")]
    pub config: StrategyConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub dialogue_id: String,
    pub session_index: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostTurn {
    pub text: String,
}

#[derive(Debug, Deserialize)]
struct MemoryQuery {
    speaker: Option<String>,
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    providers: ProviderIdentities,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::InvalidRequest(e.body_text()))
}

async fn create_session(
    State(state): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let created = state.create_session(body(payload)?).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn post_turn(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<PostTurn>, JsonRejection>,
) -> Result<Json<TurnView>, ApiError> {
    Ok(Json(state.post_turn(&id, body(payload)?.text).await?))
}

async fn close_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<CloseSummary>, ApiError> {
    Ok(Json(state.close_session(&id).await?))
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<LiveSession>, ApiError> {
    Ok(Json(state.session(&id).await?))
}

async fn get_memory(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<MemoryQuery>,
) -> Result<Json<Vec<EntryView>>, ApiError> {
    Ok(Json(state.memory(&id, q.speaker.as_deref())?))
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok",
        providers: state.providers().identities(),
    })
}

async fn unknown_route() -> ApiError {
    ApiError::NotFound("route".into())
}

/// All `/v1` routes, plus the static client when configured.
pub fn router(state: AppState) -> Router {
    let static_dir = state.config().static_dir.clone();
    let api = Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/turns", post(post_turn))
        .route("/v1/sessions/{id}/close", post(close_session))
        .route("/v1/dialogues/{id}/memory", get(get_memory))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(unknown_route),
    }
}

/// Opens the state under `config` and serves until the listener fails.
pub async fn serve(
    listener: tokio::net::TcpListener,
    providers: Providers,
    config: ServiceConfig,
) -> Result<(), ApiError> {
    let state = AppState::open(providers, config)?;
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
