//! Uploaded videos, stored as `<content id>.<ext>`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clipforge::media::{probe_video, MediaError, VideoMeta};

pub struct VideoStore {
    dir: PathBuf,
    index: Mutex<HashMap<String, PathBuf>>,
}

fn clean_extension(name: Option<&str>) -> String {
    name.and_then(|n| Path::new(n).extension())
        .and_then(|e| e.to_str())
        .filter(|e| !e.is_empty() && e.len() <= 8 && e.chars().all(|c| c.is_ascii_alphanumeric()))
        .map_or_else(|| "bin".to_string(), str::to_ascii_lowercase)
}

impl VideoStore {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut index = HashMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let is_tmp = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("upload-"));
            if is_tmp {
                let _ = fs::remove_file(&path);
            } else if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                index.insert(stem.to_string(), path.clone());
            }
        }
        Ok(Self { dir: dir.to_path_buf(), index: Mutex::new(index) })
    }

    pub fn path(&self, id: &str) -> Option<PathBuf> {
        self.index.lock().unwrap().get(id).cloned()
    }

    /// Stores `bytes` if they decode as a video; returns its metadata.
    pub fn ingest(&self, bytes: &[u8], file_name: Option<&str>) -> Result<VideoMeta, MediaError> {
        let ext = clean_extension(file_name);
        let tmp = self.dir.join(format!("upload-{}.{ext}", uuid::Uuid::new_v4().simple()));
        fs::write(&tmp, bytes)?;
        let meta = match probe_video(&tmp) {
            Ok(m) => m,
            Err(e) => {
                let _ = fs::remove_file(&tmp);
                return Err(e);
            }
        };
        let dest = self.dir.join(format!("{}.{ext}", meta.source_id));
        let mut index = self.index.lock().unwrap();
        if dest.exists() {
            fs::remove_file(&tmp)?;
        } else {
            fs::rename(&tmp, &dest)?;
        }
        index.insert(meta.source_id.clone(), dest.clone());
        Ok(VideoMeta { path: dest, ..meta })
    }
}
