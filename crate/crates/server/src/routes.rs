use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use sgt_core::motionlib::GestureMeta;
use sgt_core::skeleton::MotionJson;
use tower_http::services::ServeDir;

use crate::error::ApiError;
use crate::projects::{Project, ProjectInput, ProjectSummary};
use crate::{AppState, GenerateRequest, GenerateResponse, HealthResponse, SpeechRequest, SpeechResponse, CONTROLS_SCHEMA, OPENAPI_YAML};

type Shared = State<Arc<AppState>>;

/// Every API path with its methods; kept in step with `openapi.yaml`.
pub const ROUTES: &[(&str, &[&str])] = &[
    ("/api/health", &["get"]),
    ("/api/openapi.yaml", &["get"]),
    ("/api/schema/controls.json", &["get"]),
    ("/api/speech", &["post"]),
    ("/api/speech/{id}/audio", &["get"]),
    ("/api/generate", &["post"]),
    ("/api/projects", &["get", "post"]),
    ("/api/projects/{id}", &["get", "put", "delete"]),
    ("/api/projects/{id}/undo", &["post"]),
    ("/api/projects/{id}/redo", &["post"]),
    ("/api/motion-library", &["get"]),
    ("/api/motion-library/{id}", &["get"]),
];

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.static_dir.clone();
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/openapi.yaml", get(openapi))
        .route("/api/schema/controls.json", get(controls_schema))
        .route("/api/speech", post(speech))
        .route("/api/speech/{id}/audio", get(speech_audio))
        .route("/api/generate", post(generate))
        .route("/api/projects", get(list_projects).post(create_project))
        .route(
            "/api/projects/{id}",
            get(get_project).put(update_project).delete(delete_project),
        )
        .route("/api/projects/{id}/undo", post(undo))
        .route("/api/projects/{id}/redo", post(redo))
        .route("/api/motion-library", get(list_gestures))
        .route("/api/motion-library/{id}", get(gesture))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn health(State(s): Shared) -> Json<HealthResponse> {
    Json(s.health())
}

async fn openapi() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/yaml")], OPENAPI_YAML)
}

async fn controls_schema() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/schema+json")], CONTROLS_SCHEMA)
}

async fn speech(State(s): Shared, Json(req): Json<SpeechRequest>) -> Result<Json<SpeechResponse>, ApiError> {
    // TTS backends may block on network I/O
    Ok(Json(tokio::task::spawn_blocking(move || s.speech(&req.text)).await??))
}

async fn speech_audio(State(s): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let entry = s.audio.get(&id)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], Bytes::from(entry.wav_bytes.clone())))
}

async fn generate(State(s): Shared, Json(req): Json<GenerateRequest>) -> Result<Json<GenerateResponse>, ApiError> {
    Ok(Json(tokio::task::spawn_blocking(move || s.generate(&req)).await??))
}

async fn list_projects(State(s): Shared) -> Json<Vec<ProjectSummary>> {
    Json(s.projects.list())
}

async fn create_project(
    State(s): Shared,
    Json(input): Json<ProjectInput>,
) -> Result<(StatusCode, Json<Project>), ApiError> {
    Ok((StatusCode::CREATED, Json(s.projects.create(input)?)))
}

async fn get_project(State(s): Shared, Path(id): Path<String>) -> Result<Json<Project>, ApiError> {
    Ok(Json(s.projects.get(&id)?))
}

async fn update_project(
    State(s): Shared,
    Path(id): Path<String>,
    Json(input): Json<ProjectInput>,
) -> Result<Json<Project>, ApiError> {
    Ok(Json(s.projects.update(&id, input)?))
}

async fn delete_project(State(s): Shared, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    s.projects.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn undo(State(s): Shared, Path(id): Path<String>) -> Result<Json<Project>, ApiError> {
    Ok(Json(s.projects.undo(&id)?))
}

async fn redo(State(s): Shared, Path(id): Path<String>) -> Result<Json<Project>, ApiError> {
    Ok(Json(s.projects.redo(&id)?))
}

#[derive(Deserialize)]
struct TagQuery {
    tag: Option<String>,
}

async fn list_gestures(State(s): Shared, Query(q): Query<TagQuery>) -> Json<Vec<GestureMeta>> {
    Json(s.library.list(q.tag.as_deref()))
}

/// Kept as strings so that malformed values come back as 422 rather than
/// the extractor's 400.
#[derive(Deserialize)]
struct GestureQuery {
    speed: Option<String>,
    flip: Option<String>,
}

async fn gesture(
    State(s): Shared,
    Path(id): Path<String>,
    Query(q): Query<GestureQuery>,
) -> Result<Json<MotionJson>, ApiError> {
    let speed = match q.speed.as_deref() {
        None => 1,
        Some(v) => v
            .parse::<u32>()
            .map_err(|_| ApiError::Unprocessable(format!("invalid speed `{v}`")))?,
    };
    let flip = match q.flip.as_deref() {
        None => false,
        Some("true" | "1") => true,
        Some("false" | "0") => false,
        Some(v) => return Err(ApiError::Unprocessable(format!("invalid flip `{v}`"))),
    };
    // unknown ids take precedence over bad parameters
    s.library.get(&id)?;
    Ok(Json(s.library.instantiate(&id, speed, flip)?.to_json()))
}
