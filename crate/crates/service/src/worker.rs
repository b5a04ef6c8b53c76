use std::fs;
use std::sync::Arc;

use clipforge::highlighter::{export_plan, plan_video, render_highlight};
use clipforge::media::probe_video;
use tokio::sync::{mpsc, Mutex};

use crate::store::{Artifacts, Job, JobKind};
use crate::AppState;

pub(crate) fn spawn_workers(state: Arc<AppState>, rx: mpsc::UnboundedReceiver<String>) {
    let rx = Arc::new(Mutex::new(rx));
    for _ in 0..state.config.workers {
        tokio::spawn(worker_loop(state.clone(), rx.clone()));
    }
}

async fn worker_loop(state: Arc<AppState>, rx: Arc<Mutex<mpsc::UnboundedReceiver<String>>>) {
    loop {
        let next = rx.lock().await.recv().await;
        let Some(id) = next else { return };
        let job = match state.jobs.start(&id) {
            Ok(job) => job,
            Err(e) => {
                log::error!("cannot start job {id}: {e}");
                continue;
            }
        };
        let st = state.clone();
        let outcome = tokio::task::spawn_blocking(move || execute(&st, &job)).await;
        let recorded = match outcome {
            Ok(Ok(artifacts)) => state.jobs.finish(&id, artifacts).map(|_| ()),
            Ok(Err(message)) => state.jobs.fail(&id, &message),
            Err(join) => state.jobs.fail(&id, &format!("worker crashed: {join}")),
        };
        if let Err(e) = recorded {
            log::error!("cannot record outcome of job {id}: {e}");
        }
    }
}

fn execute(state: &AppState, job: &Job) -> Result<Artifacts, String> {
    let loaded = state
        .model
        .as_ref()
        .ok_or_else(|| format!("no model loaded from {}", state.config.checkpoint.display()))?;
    let source = state.videos.path(&job.video_id).ok_or_else(|| format!("video {} is gone", job.video_id))?;
    let meta = probe_video(&source).map_err(|e| e.to_string())?;
    let (track, derived) =
        plan_video(&loaded.model, &loaded.checkpoint_id, &meta, &job.params).map_err(|e| e.to_string())?;
    let plan = match &job.plan {
        Some(p) if p.source_id != meta.source_id => {
            return Err(format!("plan is for video {} but job video is {}", p.source_id, meta.source_id))
        }
        Some(p) => p.clone(),
        None => derived,
    };
    let dir = state.jobs.job_dir(&job.id);
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let scores = dir.join("scores.json");
    let plan_path = dir.join("plan.json");
    track.write_json(&scores).map_err(|e| e.to_string())?;
    export_plan(&plan, &plan_path).map_err(|e| e.to_string())?;
    let video = if job.kind == JobKind::Highlight && !plan.segments.is_empty() {
        let ext = source.extension().and_then(|e| e.to_str()).unwrap_or("y4m");
        let out = dir.join(format!("highlight.{ext}"));
        render_highlight(&plan, &source, &out).map_err(|e| e.to_string())?;
        Some(out)
    } else {
        None
    };
    Ok(Artifacts { scores, plan: plan_path, video })
}
