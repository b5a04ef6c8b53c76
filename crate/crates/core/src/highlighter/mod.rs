//! Window scoring over long videos, segment extraction, highlight plans.
//!
//! All segment arithmetic runs on whole frames of the 16 fps processing
//! grid; seconds are derived from frame indices, never the other way round.

mod render;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{MediaError, VideoMeta, WindowClips, WindowSpec, PROCESSING_FPS};
use crate::nn::{load_checkpoint, Mode, Model, NnError};
use crate::scalar::Scalar;

pub use render::{cut_list, render_highlight, RenderReport};

pub const PLAN_SCHEMA_VERSION: u32 = 1;
/// Slack for float comparisons of seconds and averaged scores.
const SEC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HighlightError {
    #[error("video has no frames: {}", .0.display())]
    EmptyVideo(PathBuf),
    #[error("checkpoint not found: {}", .0.display())]
    CheckpointMissing(PathBuf),
    #[error("invalid highlight parameters: {0}")]
    InvalidParams(String),
    #[error("highlight plan has no segments")]
    EmptyPlan,
    #[error("plan was made for video {expected} but the source is {found}")]
    SourceMismatch { expected: String, found: String },
    #[error("plan schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("malformed highlight plan: {0}")]
    MalformedPlan(String),
    #[error("render tool failed ({status}): {stderr}")]
    RenderToolFailure { status: String, stderr: String },
    #[error(transparent)]
    Media(MediaError),
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<MediaError> for HighlightError {
    fn from(e: MediaError) -> Self {
        match e {
            MediaError::EmptyVideo(p) => Self::EmptyVideo(p),
            other => Self::Media(other),
        }
    }
}

impl From<NnError> for HighlightError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::CheckpointMissing(p) => Self::CheckpointMissing(p),
            other => Self::Nn(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighlightParams {
    pub threshold: f64,
    pub stride_frames: usize,
    pub max_gap_sec: f64,
    pub min_len_sec: f64,
}

impl Default for HighlightParams {
    fn default() -> Self {
        Self { threshold: 0.5, stride_frames: 8, max_gap_sec: 1.0, min_len_sec: 1.0 }
    }
}

impl HighlightParams {
    pub fn validate(&self) -> Result<(), HighlightError> {
        let bad = |m: String| Err(HighlightError::InvalidParams(m));
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return bad(format!("threshold {} must be a finite value ≥ 0", self.threshold));
        }
        if self.stride_frames == 0 {
            return bad("stride_frames must be at least 1".into());
        }
        if !(self.max_gap_sec.is_finite() && self.max_gap_sec >= 0.0) {
            return bad(format!("max_gap_sec {} must be finite and ≥ 0", self.max_gap_sec));
        }
        if !(self.min_len_sec.is_finite() && self.min_len_sec >= 0.0) {
            return bad(format!("min_len_sec {} must be finite and ≥ 0", self.min_len_sec));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub window: WindowSpec,
    pub p_violence: f64,
}

/// Scores of every sliding window of one video, the `scores` artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrack {
    pub source_id: String,
    pub checkpoint_id: String,
    pub fps: f64,
    pub duration_sec: f64,
    pub stride_frames: usize,
    pub scores: Vec<WindowScore>,
}

impl ScoreTrack {
    pub fn write_json(&self, path: &Path) -> Result<(), HighlightError> {
        fs::write(path, serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, HighlightError> {
        serde_json::from_slice(&fs::read(path)?).map_err(|e| HighlightError::Io(std::io::Error::other(e)))
    }
}

pub fn load_model<T: Scalar>(checkpoint: &Path) -> Result<Model<T>, HighlightError> {
    Ok(load_checkpoint(checkpoint)?)
}

const SCORE_BATCH: usize = 8;

/// Eval-mode violence probability for each sliding window, ordered by start.
pub fn score_video<T: Scalar>(
    model: &Model<T>,
    video: &VideoMeta,
    stride_frames: usize,
) -> Result<Vec<WindowScore>, HighlightError> {
    let windows = WindowClips::new(video, stride_frames)?.collect::<Result<Vec<_>, _>>()?;
    let scored: Vec<Vec<WindowScore>> = windows
        .par_chunks(SCORE_BATCH)
        .map(|chunk| {
            let clips: Vec<Vec<T>> = chunk.iter().map(|(_, c)| c.data().iter().map(|&v| T::of_f32(v)).collect()).collect();
            let refs: Vec<&[T]> = clips.iter().map(Vec::as_slice).collect();
            let probs = model.forward(&refs, Mode::Eval)?;
            Ok(chunk.iter().zip(probs).map(|((w, _), p)| WindowScore { window: *w, p_violence: p[1].as_f64() }).collect())
        })
        .collect::<Result<_, NnError>>()?;
    let mut scores: Vec<WindowScore> = scored.into_iter().flatten().collect();
    scores.sort_by_key(|s| s.window.start_frame);
    Ok(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_sec: f64,
    pub end_sec: f64,
    pub mean_score: f64,
    pub peak_score: f64,
}

impl Segment {
    pub fn duration_sec(&self) -> f64 {
        self.end_sec - self.start_sec
    }
}

fn frames_to_sec(frames: usize) -> f64 {
    frames as f64 / PROCESSING_FPS
}

/// Thresholds windows (`p ≥ threshold`), unions their frame spans, closes
/// gaps of at most `max_gap_sec`, and drops segments shorter than
/// `min_len_sec`. Mean and peak cover the windows inside each segment.
pub fn segments_from_scores(scores: &[WindowScore], params: &HighlightParams) -> Vec<Segment> {
    let mut violent: Vec<&WindowScore> = scores
        .iter()
        .filter(|s| s.p_violence >= params.threshold && s.window.end_frame > s.window.start_frame)
        .collect();
    violent.sort_by_key(|s| (s.window.start_frame, s.window.end_frame));

    struct Open {
        start: usize,
        end: usize,
        sum: f64,
        count: usize,
        peak: f64,
    }
    let mut out = Vec::new();
    let mut flush = |o: Open| {
        if frames_to_sec(o.end - o.start) + SEC_TOLERANCE >= params.min_len_sec {
            out.push(Segment {
                start_frame: o.start,
                end_frame: o.end,
                start_sec: frames_to_sec(o.start),
                end_sec: frames_to_sec(o.end),
                mean_score: o.sum / o.count as f64,
                peak_score: o.peak,
            });
        }
    };
    let mut open: Option<Open> = None;
    for s in violent {
        let (a, b, p) = (s.window.start_frame, s.window.end_frame, s.p_violence);
        match open.as_mut() {
            Some(o) if frames_to_sec(a.saturating_sub(o.end)) <= params.max_gap_sec + SEC_TOLERANCE => {
                o.end = o.end.max(b);
                o.sum += p;
                o.count += 1;
                o.peak = o.peak.max(p);
            }
            _ => {
                if let Some(done) = open.replace(Open { start: a, end: b, sum: p, count: 1, peak: p }) {
                    flush(done);
                }
            }
        }
    }
    if let Some(done) = open {
        flush(done);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightPlan {
    pub schema_version: u32,
    pub source_id: String,
    pub checkpoint_id: String,
    pub params: HighlightParams,
    pub segments: Vec<Segment>,
    pub total_sec: f64,
}

impl HighlightPlan {
    pub fn new(source_id: String, checkpoint_id: String, params: HighlightParams, segments: Vec<Segment>) -> Self {
        let total_sec = segments.iter().map(Segment::duration_sec).sum();
        Self { schema_version: PLAN_SCHEMA_VERSION, source_id, checkpoint_id, params, segments, total_sec }
    }

    pub fn validate(&self) -> Result<(), HighlightError> {
        let bad = |m: String| Err(HighlightError::MalformedPlan(m));
        if self.schema_version != PLAN_SCHEMA_VERSION {
            return Err(HighlightError::SchemaVersionMismatch {
                found: self.schema_version.into(),
                expected: PLAN_SCHEMA_VERSION,
            });
        }
        self.params.validate().or_else(|e| bad(e.to_string()))?;
        for (i, s) in self.segments.iter().enumerate() {
            if s.end_frame <= s.start_frame {
                return bad(format!("segment {i} is empty"));
            }
            if (s.start_sec - frames_to_sec(s.start_frame)).abs() > SEC_TOLERANCE
                || (s.end_sec - frames_to_sec(s.end_frame)).abs() > SEC_TOLERANCE
            {
                return bad(format!("segment {i} seconds disagree with its frames"));
            }
            let unit = -SEC_TOLERANCE..=1.0 + SEC_TOLERANCE;
            if !unit.contains(&s.mean_score) || !unit.contains(&s.peak_score) || s.peak_score < s.mean_score - SEC_TOLERANCE {
                return bad(format!("segment {i} scores are outside 0 ≤ mean ≤ peak ≤ 1"));
            }
            if i > 0 && s.start_frame < self.segments[i - 1].end_frame {
                return bad(format!("segment {i} overlaps or precedes segment {}", i - 1));
            }
        }
        let total: f64 = self.segments.iter().map(Segment::duration_sec).sum();
        if (total - self.total_sec).abs() > 1e-6 {
            return bad(format!("total_sec {} but segments sum to {total}", self.total_sec));
        }
        Ok(())
    }
}

pub fn export_plan(plan: &HighlightPlan, path: &Path) -> Result<(), HighlightError> {
    plan.validate()?;
    fs::write(path, serde_json::to_vec_pretty(plan).map_err(std::io::Error::other)?)?;
    Ok(())
}

pub fn parse_plan(bytes: &[u8]) -> Result<HighlightPlan, HighlightError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| HighlightError::MalformedPlan(e.to_string()))?;
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(PLAN_SCHEMA_VERSION) => {}
        Some(found) => return Err(HighlightError::SchemaVersionMismatch { found, expected: PLAN_SCHEMA_VERSION }),
        None => return Err(HighlightError::MalformedPlan("missing schema_version".into())),
    }
    let plan: HighlightPlan = serde_json::from_value(value).map_err(|e| HighlightError::MalformedPlan(e.to_string()))?;
    plan.validate()?;
    Ok(plan)
}

pub fn import_plan(path: &Path) -> Result<HighlightPlan, HighlightError> {
    parse_plan(&fs::read(path)?)
}

/// Scores `video` and derives its plan in one go.
pub fn plan_video<T: Scalar>(
    model: &Model<T>,
    checkpoint_id: &str,
    video: &VideoMeta,
    params: &HighlightParams,
) -> Result<(ScoreTrack, HighlightPlan), HighlightError> {
    params.validate()?;
    let scores = score_video(model, video, params.stride_frames)?;
    let segments = segments_from_scores(&scores, params);
    let track = ScoreTrack {
        source_id: video.source_id.clone(),
        checkpoint_id: checkpoint_id.to_string(),
        fps: video.fps,
        duration_sec: video.duration_sec,
        stride_frames: params.stride_frames,
        scores,
    };
    let plan = HighlightPlan::new(video.source_id.clone(), checkpoint_id.to_string(), *params, segments);
    Ok((track, plan))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(start: usize, p: f64) -> WindowScore {
        WindowScore { window: WindowSpec::new(start, start + 16), p_violence: p }
    }

    #[test]
    fn below_threshold_gives_nothing() {
        let s: Vec<_> = (0..10).map(|i| score(i * 8, 0.49)).collect();
        assert!(segments_from_scores(&s, &HighlightParams::default()).is_empty());
        assert!(segments_from_scores(&[], &HighlightParams::default()).is_empty());
    }

    #[test]
    fn overlapping_windows_union() {
        let s = [score(0, 0.9), score(8, 0.7)];
        let seg = segments_from_scores(&s, &HighlightParams::default());
        assert_eq!(seg.len(), 1);
        assert_eq!((seg[0].start_sec, seg[0].end_sec), (0.0, 1.5));
        assert!((seg[0].mean_score - 0.8).abs() < 1e-12);
        assert_eq!(seg[0].peak_score, 0.9);
    }

    #[test]
    fn gap_and_min_length() {
        let p = HighlightParams { max_gap_sec: 0.5, min_len_sec: 1.5, ..Default::default() };
        // [0,16) and [24,40): gap of 8 frames = 0.5 s closes.
        let seg = segments_from_scores(&[score(0, 0.6), score(24, 0.6)], &p);
        assert_eq!((seg[0].start_frame, seg[0].end_frame), (0, 40));
        // A 9-frame gap stays open and both 1 s pieces are too short.
        assert!(segments_from_scores(&[score(0, 0.6), score(25, 0.6)], &p).is_empty());
        // Threshold ties count as violent.
        assert_eq!(segments_from_scores(&[score(0, 0.5)], &HighlightParams::default()).len(), 1);
    }

    #[test]
    fn params_validation() {
        assert!(HighlightParams::default().validate().is_ok());
        assert!(HighlightParams { stride_frames: 0, ..Default::default() }.validate().is_err());
        assert!(HighlightParams { threshold: f64::NAN, ..Default::default() }.validate().is_err());
        assert!(HighlightParams { min_len_sec: -1.0, ..Default::default() }.validate().is_err());
    }
}
