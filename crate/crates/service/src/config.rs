use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_PREFIX: &str = "CLIPFORGE_";

/// Service settings. A JSON file provides the base values; `CLIPFORGE_*`
/// environment variables override individual keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub checkpoint: PathBuf,
    pub storage_dir: PathBuf,
    pub max_upload_bytes: usize,
    pub workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint: PathBuf::from("model.ckpt"),
            storage_dir: PathBuf::from("clipforge-data"),
            max_upload_bytes: 512 * 1024 * 1024,
            workers: 1,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `CLIPFORGE_HOST`, `_PORT`, `_CHECKPOINT`, `_STORAGE_DIR`,
    /// `_MAX_UPLOAD_BYTES` and `_WORKERS` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        let get = |key: &str| lookup(&format!("{ENV_PREFIX}{key}"));
        let parse = |key: &str, v: String| {
            v.parse::<usize>().map_err(|_| ServiceError::Config(format!("{ENV_PREFIX}{key}={v} is not a number")))
        };
        if let Some(v) = get("HOST") {
            self.host = v;
        }
        if let Some(v) = get("PORT") {
            self.port = v.parse().map_err(|_| ServiceError::Config(format!("{ENV_PREFIX}PORT={v} is not a port")))?;
        }
        if let Some(v) = get("CHECKPOINT") {
            self.checkpoint = v.into();
        }
        if let Some(v) = get("STORAGE_DIR") {
            self.storage_dir = v.into();
        }
        if let Some(v) = get("MAX_UPLOAD_BYTES") {
            self.max_upload_bytes = parse("MAX_UPLOAD_BYTES", v)?;
        }
        if let Some(v) = get("WORKERS") {
            self.workers = parse("WORKERS", v)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.workers == 0 {
            return Err(ServiceError::Config("workers must be at least 1".into()));
        }
        if self.max_upload_bytes == 0 {
            return Err(ServiceError::Config("max_upload_bytes must be positive".into()));
        }
        Ok(())
    }

    /// File settings (if any) with environment overrides applied.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }
}
