//! Disk-backed job records, one JSON file per job.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use clipforge::highlighter::{HighlightParams, HighlightPlan};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Score,
    Highlight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Done | Self::Failed)
    }

    fn may_become(self, next: JobState) -> bool {
        matches!((self, next), (Self::Queued, Self::Running) | (Self::Running, Self::Done) | (Self::Running, Self::Failed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub scores: PathBuf,
    pub plan: PathBuf,
    /// Absent when a highlight job's plan has no segments.
    pub video: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    pub state: JobState,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub video_id: String,
    pub state: JobState,
    pub params: HighlightParams,
    /// Caller-edited plan to render instead of the derived one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<HighlightPlan>,
    pub artifacts: Option<Artifacts>,
    pub error: Option<String>,
    pub history: Vec<StateChange>,
    pub created_ms: u64,
    pub updated_ms: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub struct JobStore {
    dir: PathBuf,
    jobs: Mutex<HashMap<String, Job>>,
}

impl JobStore {
    /// Loads every job under `dir`. Jobs that were running when the
    /// previous process stopped are marked failed; queued ones are returned
    /// for re-enqueueing.
    pub fn open(dir: &Path) -> Result<(Self, Vec<String>), ServiceError> {
        fs::create_dir_all(dir)?;
        let mut jobs = HashMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path().join("job.json");
            if let Ok(bytes) = fs::read(&path) {
                if let Ok(job) = serde_json::from_slice::<Job>(&bytes) {
                    jobs.insert(job.id.clone(), job);
                }
            }
        }
        let store = Self { dir: dir.to_path_buf(), jobs: Mutex::new(jobs) };
        let ids: Vec<(String, JobState)> =
            store.jobs.lock().unwrap().values().map(|j| (j.id.clone(), j.state)).collect();
        let mut pending = Vec::new();
        for (id, state) in ids {
            match state {
                JobState::Running => store.fail(&id, "service restarted while the job was running")?,
                JobState::Queued => pending.push(id),
                _ => {}
            }
        }
        pending.sort_by_key(|id| store.get(id).map(|j| j.created_ms));
        Ok((store, pending))
    }

    pub fn job_dir(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }

    fn persist(&self, job: &Job) -> Result<(), ServiceError> {
        let dir = self.job_dir(&job.id);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join("job.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(job).map_err(std::io::Error::other)?)?;
        fs::rename(tmp, dir.join("job.json"))?;
        Ok(())
    }

    pub fn create(
        &self,
        kind: JobKind,
        video_id: String,
        params: HighlightParams,
        plan: Option<HighlightPlan>,
    ) -> Result<Job, ServiceError> {
        let now = now_ms();
        let job = Job {
            id: uuid::Uuid::new_v4().simple().to_string(),
            kind,
            video_id,
            state: JobState::Queued,
            params,
            plan,
            artifacts: None,
            error: None,
            history: vec![StateChange { state: JobState::Queued, at_ms: now }],
            created_ms: now,
            updated_ms: now,
        };
        let mut jobs = self.jobs.lock().unwrap();
        self.persist(&job)?;
        jobs.insert(job.id.clone(), job.clone());
        Ok(job)
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.jobs.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transition(&self, id: &str, next: JobState, edit: impl FnOnce(&mut Job)) -> Result<Job, ServiceError> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs.get_mut(id).ok_or_else(|| ServiceError::UnknownJob(id.to_string()))?;
        if !job.state.may_become(next) {
            return Err(ServiceError::InvalidTransition { id: id.to_string(), from: job.state, to: next });
        }
        let mut updated = job.clone();
        let now = now_ms();
        updated.state = next;
        updated.updated_ms = now;
        updated.history.push(StateChange { state: next, at_ms: now });
        edit(&mut updated);
        self.persist(&updated)?;
        *job = updated.clone();
        Ok(updated)
    }

    pub fn start(&self, id: &str) -> Result<Job, ServiceError> {
        self.transition(id, JobState::Running, |_| {})
    }

    pub fn finish(&self, id: &str, artifacts: Artifacts) -> Result<Job, ServiceError> {
        self.transition(id, JobState::Done, |j| j.artifacts = Some(artifacts))
    }

    pub fn fail(&self, id: &str, error: &str) -> Result<(), ServiceError> {
        self.transition(id, JobState::Failed, |j| j.error = Some(error.to_string())).map(|_| ())
    }
}
