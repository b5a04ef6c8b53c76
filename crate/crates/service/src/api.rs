use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clipforge::highlighter::{HighlightParams, HighlightPlan};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{JobKind, JobState};
use crate::AppState;

pub(crate) fn router(state: Arc<AppState>) -> Router {
    // Multipart framing adds a little on top of the file itself.
    let limit = state.config.max_upload_bytes.saturating_add(64 * 1024);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/videos", post(upload))
        .route("/videos/{id}", get(video_meta))
        .route("/jobs", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/{artifact}", get(get_artifact))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

#[derive(Debug)]
pub(crate) struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn err(status: StatusCode, msg: impl Into<String>) -> ApiError {
    ApiError(status, msg.into())
}

type ApiResult<T> = Result<T, ApiError>;

async fn healthz(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let loaded = state.checkpoint_loaded();
    Json(json!({
        "status": if loaded { "ok" } else { "degraded" },
        "checkpoint_loaded": loaded,
        "detail": state.model_error,
    }))
}

async fn upload(State(state): State<Arc<AppState>>, mut form: Multipart) -> ApiResult<impl IntoResponse> {
    let field = form
        .next_field()
        .await
        .map_err(|e| err(e.status(), e.body_text()))?
        .ok_or_else(|| err(StatusCode::BAD_REQUEST, "multipart body has no file field"))?;
    let name = field.file_name().map(str::to_string);
    let bytes = field.bytes().await.map_err(|e| err(e.status(), e.body_text()))?;
    if bytes.len() > state.config.max_upload_bytes {
        return Err(err(StatusCode::PAYLOAD_TOO_LARGE, format!("upload exceeds {} bytes", state.config.max_upload_bytes)));
    }
    let st = state.clone();
    let meta = tokio::task::spawn_blocking(move || st.videos.ingest(&bytes, name.as_deref()))
        .await
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| err(StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(Json(json!({ "video_id": meta.source_id, "metadata": meta })))
}

async fn video_meta(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let path = state.videos.path(&id).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown video {id}")))?;
    let meta = tokio::task::spawn_blocking(move || clipforge::media::probe_video(&path))
        .await
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(meta))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobRequest {
    video_id: String,
    kind: JobKind,
    #[serde(default)]
    params: HighlightParams,
    #[serde(default)]
    plan: Option<HighlightPlan>,
}

#[derive(Serialize)]
struct JobCreated {
    job_id: String,
    state: JobState,
}

async fn create_job(
    State(state): State<Arc<AppState>>,
    body: Result<Json<JobRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body.map_err(|e| err(StatusCode::BAD_REQUEST, e.body_text()))?;
    req.params.validate().map_err(|e| err(StatusCode::BAD_REQUEST, e.to_string()))?;
    if let Some(plan) = &req.plan {
        if req.kind != JobKind::Highlight {
            return Err(err(StatusCode::BAD_REQUEST, "a plan can only be supplied to highlight jobs"));
        }
        plan.validate().map_err(|e| err(StatusCode::BAD_REQUEST, e.to_string()))?;
        if plan.source_id != req.video_id {
            return Err(err(StatusCode::BAD_REQUEST, "plan source_id does not match video_id"));
        }
    }
    if state.videos.path(&req.video_id).is_none() {
        return Err(err(StatusCode::NOT_FOUND, format!("unknown video {}", req.video_id)));
    }
    let job = state
        .jobs
        .create(req.kind, req.video_id, req.params, req.plan)
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    state.enqueue(job.id.clone());
    Ok(Json(JobCreated { job_id: job.id, state: job.state }))
}

async fn get_job(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    state.jobs.get(&id).map(Json).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown job {id}")))
}

async fn get_artifact(
    State(state): State<Arc<AppState>>,
    Path((id, artifact)): Path<(String, String)>,
) -> ApiResult<Response> {
    let job = state.jobs.get(&id).ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown job {id}")))?;
    if !["scores", "plan", "video"].contains(&artifact.as_str()) {
        return Err(err(StatusCode::NOT_FOUND, format!("unknown artifact {artifact}")));
    }
    let artifacts = match (job.state, &job.artifacts) {
        (JobState::Done, Some(a)) => a,
        (JobState::Failed, _) => {
            let reason = job.error.unwrap_or_default();
            return Err(err(StatusCode::CONFLICT, format!("job {id} failed: {reason}")));
        }
        (s, _) => return Err(err(StatusCode::CONFLICT, format!("job {id} is {s:?}, not done"))),
    };
    let (path, content_type) = match artifact.as_str() {
        "scores" => (artifacts.scores.clone(), "application/json"),
        "plan" => (artifacts.plan.clone(), "application/json"),
        _ => {
            let p = artifacts
                .video
                .clone()
                .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("job {id} produced no highlight video")))?;
            let ct = match p.extension().and_then(|e| e.to_str()) {
                Some("mp4") => "video/mp4",
                Some("webm") => "video/webm",
                Some("y4m") => "video/x-yuv4mpeg",
                _ => "application/octet-stream",
            };
            (p, ct)
        }
    };
    let bytes = tokio::fs::read(&path).await.map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}
