//! Labelled manifests, the stratified train/val/test split and the clip
//! archive format.

mod archive;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{read_archive, write_archive, ClipArchive, ARCHIVE_MAGIC, ARCHIVE_VERSION};

use crate::media::{probe_video, sample_clip_uniform, ClipTensor, MediaError};

/// Class names by index. Index 1 is the positive class everywhere.
pub const CLASSES_LIST: [&str; 2] = ["NonViolence", "Violence"];

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.72, 0.08, 0.20);

/// File extensions treated as video when scanning class directories.
pub const VIDEO_EXTENSIONS: &[&str] =
    &["y4m", "mp4", "avi", "mkv", "mov", "webm", "mpg", "mpeg", "m4v", "wmv", "flv", "ts"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("class directory {} is missing", .0.display())]
    MissingClassDir(PathBuf),
    #[error("class directory {} has no usable videos", .0.display())]
    EmptyClassDir(PathBuf),
    #[error("class {class} has {count} samples, at least {min} are needed to split")]
    TooFewSamples { class: &'static str, count: usize, min: usize },
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    InvalidFractions((f64, f64, f64)),
    #[error("duplicate clip id {0}")]
    DuplicateClipId(String),
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("manifest line {line}: {reason}")]
    BadManifestLine { line: usize, reason: String },
    #[error("not a clip archive (bad magic)")]
    BadMagic,
    #[error("clip archive version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("clip archive payload is {actual} bytes, header implies {expected}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("clip archive header is malformed: {0}")]
    BadHeader(String),
    #[error("{0} clips but {1} labels")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Label {
    NonViolence,
    Violence,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::NonViolence, Label::Violence];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        CLASSES_LIST[self.index()]
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_name(name: &str) -> Option<Self> {
        CLASSES_LIST.iter().position(|c| *c == name).and_then(Self::from_index)
    }

    pub fn one_hot(self) -> [f32; 2] {
        let mut v = [0.0; 2];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Label> for String {
    fn from(l: Label) -> Self {
        l.name().to_string()
    }
}

impl TryFrom<String> for Label {
    type Error = DatasetError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Label::from_name(&s).ok_or(DatasetError::UnknownClass(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub path: PathBuf,
    pub label: Label,
    #[serde(default)]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Seed of the split that assigned `split` fields, if any.
    pub seed: Option<u64>,
}

/// Files found in class directories that were not treated as videos.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: Vec<PathBuf>,
}

impl SkipReport {
    pub fn count(&self) -> usize {
        self.skipped.len()
    }
}

fn is_video(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| VIDEO_EXTENSIONS.iter().any(|v| v.eq_ignore_ascii_case(e)))
}

/// Scans `root/<class>/…` for every class in [`CLASSES_LIST`]. Entries are
/// ordered by class index then path.
pub fn build_manifest(root: &Path) -> Result<(DatasetManifest, SkipReport), DatasetError> {
    let mut entries = Vec::new();
    let mut report = SkipReport::default();
    for label in Label::ALL {
        let dir = root.join(label.name());
        if !dir.is_dir() {
            return Err(DatasetError::MissingClassDir(dir));
        }
        let mut files = Vec::new();
        collect_files(&dir, &mut files)?;
        files.sort();
        let before = entries.len();
        for path in files {
            if !is_video(&path) {
                report.skipped.push(path);
                continue;
            }
            let rel = path.strip_prefix(&dir).unwrap_or(&path).with_extension("");
            let clip_id = format!("{}/{}", label.name(), rel.to_string_lossy().replace('\\', "/"));
            entries.push(ManifestEntry { clip_id, path, label, split: None });
        }
        if entries.len() == before {
            return Err(DatasetError::EmptyClassDir(dir));
        }
    }
    let manifest = DatasetManifest { entries, seed: None };
    manifest.check_unique()?;
    Ok((manifest, report))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), DatasetError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Minimum number of clips per class accepted by [`split_manifest`].
pub const MIN_PER_CLASS: usize = 5;

/// Stratified split: each class is shuffled with ChaCha8 seeded from `seed`
/// (classes in index order, one generator for the whole call); the first
/// `round(train·n)` go to train, the next `round(val·n)` to val, the rest to
/// test.
pub fn split_manifest(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    let (ft, fv, fs_) = fractions;
    if ft < 0.0 || fv < 0.0 || fs_ < 0.0 || ((ft + fv + fs_) - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidFractions(fractions));
    }
    manifest.check_unique()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = manifest.clone();
    out.seed = Some(seed);
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..out.entries.len()).filter(|&i| out.entries[i].label == label).collect();
        let n = idx.len();
        if n < MIN_PER_CLASS {
            return Err(DatasetError::TooFewSamples { class: label.name(), count: n, min: MIN_PER_CLASS });
        }
        idx.shuffle(&mut rng);
        let n_train = ((ft * n as f64).round() as usize).min(n);
        let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
        for (rank, &i) in idx.iter().enumerate() {
            out.entries[i].split = Some(if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(out)
}

impl DatasetManifest {
    fn check_unique(&self) -> Result<(), DatasetError> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(DatasetError::DuplicateClipId(e.clip_id.clone()));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Some(split)).collect()
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.entries.iter().filter(|e| e.split == Some(split) && e.label == label).count()
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for e in &self.entries {
            let line = ManifestLine {
                clip_id: e.clip_id.clone(),
                path: e.path.clone(),
                class_index: e.label.index(),
                label: e.label,
                split: e.split,
                seed: self.seed,
            };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, DatasetError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut entries = Vec::new();
        let mut seed = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ManifestLine = serde_json::from_str(&line)
                .map_err(|e| DatasetError::BadManifestLine { line: i + 1, reason: e.to_string() })?;
            if parsed.class_index != parsed.label.index() {
                return Err(DatasetError::BadManifestLine {
                    line: i + 1,
                    reason: format!("class_index {} disagrees with label {}", parsed.class_index, parsed.label),
                });
            }
            seed = seed.or(parsed.seed);
            entries.push(ManifestEntry {
                clip_id: parsed.clip_id,
                path: parsed.path,
                label: parsed.label,
                split: parsed.split,
            });
        }
        let m = Self { entries, seed };
        m.check_unique()?;
        Ok(m)
    }
}

/// Samples one uniform clip from every entry, in entry order.
pub fn preprocess(entries: &[&ManifestEntry]) -> Result<ClipArchive, DatasetError> {
    use rayon::prelude::*;
    let clips = entries
        .par_iter()
        .map(|e| {
            let meta = probe_video(&e.path)?;
            Ok(sample_clip_uniform(&meta)?.into_data())
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    let mut archive = ClipArchive::new(ClipTensor::SHAPE);
    for (clip, e) in clips.iter().zip(entries) {
        archive.push(clip, e.label)?;
    }
    Ok(archive)
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    clip_id: String,
    path: PathBuf,
    label: Label,
    class_index: usize,
    #[serde(default)]
    split: Option<Split>,
    #[serde(default)]
    seed: Option<u64>,
}
