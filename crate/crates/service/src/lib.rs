//! HTTP job service: upload videos, run scoring and highlight jobs on a
//! worker pool, and serve the resulting artifacts.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /videos` | multipart upload, returns `{video_id, metadata}` |
//! | `GET /videos/{id}` | probed metadata |
//! | `POST /jobs` | `{video_id, kind, params?, plan?}`, returns `{job_id, state}` |
//! | `GET /jobs/{id}` | job record |
//! | `GET /jobs/{id}/scores` `/plan` `/video` | artifacts once the job is done |
//! | `GET /healthz` | `{status, checkpoint_loaded}` |

mod api;
mod config;
mod store;
mod videos;
mod worker;

use std::path::Path;
use std::sync::Arc;

use axum::Router;
use clipforge::nn::checkpoint_id;
use clipforge::Model32;
use thiserror::Error;
use tokio::sync::mpsc;

pub use config::{ServiceConfig, ENV_PREFIX};
pub use store::{Artifacts, Job, JobKind, JobState, JobStore, StateChange};
pub use videos::VideoStore;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("job {id} cannot move from {from:?} to {to:?}")]
    InvalidTransition { id: String, from: JobState, to: JobState },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) struct LoadedModel {
    pub model: Model32,
    pub checkpoint_id: String,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub jobs: JobStore,
    pub videos: VideoStore,
    pub(crate) model: Option<LoadedModel>,
    pub model_error: Option<String>,
    queue: mpsc::UnboundedSender<String>,
}

impl AppState {
    pub fn checkpoint_loaded(&self) -> bool {
        self.model.is_some()
    }

    pub(crate) fn enqueue(&self, id: String) {
        // The receiver lives as long as the workers; a send can only fail
        // during shutdown.
        let _ = self.queue.send(id);
    }
}

pub struct Service {
    pub router: Router,
    pub state: Arc<AppState>,
}

fn load_model(path: &Path) -> Result<LoadedModel, String> {
    let model = clipforge::highlighter::load_model::<f32>(path).map_err(|e| e.to_string())?;
    let checkpoint_id = checkpoint_id(path).map_err(|e| e.to_string())?;
    Ok(LoadedModel { model, checkpoint_id })
}

/// Opens storage, loads the checkpoint, and starts the workers. Must run
/// inside a Tokio runtime.
pub fn build(config: ServiceConfig) -> Result<Service, ServiceError> {
    config.validate()?;
    std::fs::create_dir_all(&config.storage_dir)?;
    let (jobs, pending) = JobStore::open(&config.storage_dir.join("jobs"))?;
    let videos = VideoStore::open(&config.storage_dir.join("videos"))?;
    let (model, model_error) = match load_model(&config.checkpoint) {
        Ok(m) => (Some(m), None),
        Err(e) => {
            log::warn!("serving without a model: {e}");
            (None, Some(e))
        }
    };
    let (tx, rx) = mpsc::unbounded_channel();
    let state = Arc::new(AppState { config, jobs, videos, model, model_error, queue: tx });
    worker::spawn_workers(state.clone(), rx);
    for id in pending {
        state.enqueue(id);
    }
    Ok(Service { router: api::router(state.clone()), state })
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", config.host, config.port);
    let service = build(config)?;
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, service.router).await?;
    Ok(())
}
