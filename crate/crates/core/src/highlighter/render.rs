//! Cut-and-concatenate rendering of a plan.
//!
//! A `.y4m` source rendered to a `.y4m` output is cut in-process, frame
//! exact. Anything else is re-encoded by `ffmpeg` from an explicit cut list.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{HighlightError, HighlightPlan};
use crate::media::{backend_for, content_id, ffmpeg_available, open_source, stream_info, Backend, Y4mWriter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    pub output: PathBuf,
    pub frames: usize,
    pub fps: f64,
    pub duration_sec: f64,
    /// Source frame ranges `[start, end)` in output order.
    pub cuts: Vec<(usize, usize)>,
}

/// Source frame ranges for each segment, rounded to the nearest source
/// frame boundary and clipped to the stream.
pub fn cut_list(plan: &HighlightPlan, source_fps: f64, source_frames: usize) -> Vec<(usize, usize)> {
    plan.segments
        .iter()
        .map(|s| {
            let a = ((s.start_sec * source_fps).round() as usize).min(source_frames);
            let b = ((s.end_sec * source_fps).round() as usize).min(source_frames);
            (a, b)
        })
        .filter(|(a, b)| b > a)
        .collect()
}

fn fps_ratio(fps: f64) -> (usize, usize) {
    if (fps - fps.round()).abs() < 1e-6 {
        (fps.round() as usize, 1)
    } else {
        ((fps * 1000.0).round() as usize, 1000)
    }
}

fn is_y4m(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

pub fn render_highlight(plan: &HighlightPlan, source: &Path, output: &Path) -> Result<RenderReport, HighlightError> {
    if plan.segments.is_empty() {
        return Err(HighlightError::EmptyPlan);
    }
    plan.validate()?;
    let found = content_id(source)?;
    if found != plan.source_id {
        return Err(HighlightError::SourceMismatch { expected: plan.source_id.clone(), found });
    }
    let info = stream_info(source)?;
    let cuts = cut_list(plan, info.fps, info.frame_count);
    if cuts.is_empty() {
        return Err(HighlightError::EmptyPlan);
    }
    if info.backend == Backend::Y4m && is_y4m(output) {
        render_native(source, output, &info, &cuts)?;
    } else {
        render_ffmpeg(source, output, info.fps, &cuts)?;
    }
    let out = stream_info(output)?;
    Ok(RenderReport {
        output: output.to_path_buf(),
        frames: out.frame_count,
        fps: out.fps,
        duration_sec: out.frame_count as f64 / out.fps,
        cuts,
    })
}

fn render_native(
    source: &Path,
    output: &Path,
    info: &crate::media::StreamInfo,
    cuts: &[(usize, usize)],
) -> Result<(), HighlightError> {
    let mut frames = open_source(source, info)?;
    let (num, den) = fps_ratio(info.fps);
    let mut writer = Y4mWriter::create(output, info.width, info.height, num, den)?;
    let last = cuts.iter().map(|c| c.1).max().unwrap_or(0);
    let mut k = 0;
    while k < last {
        let Some(frame) = frames.next_frame()? else { break };
        if cuts.iter().any(|&(a, b)| (a..b).contains(&k)) {
            writer.write(&frame)?;
        }
        k += 1;
    }
    writer.finish()?;
    Ok(())
}

fn render_ffmpeg(source: &Path, output: &Path, fps: f64, cuts: &[(usize, usize)]) -> Result<(), HighlightError> {
    if !ffmpeg_available() {
        return Err(HighlightError::RenderToolFailure {
            status: "not found".into(),
            stderr: format!("ffmpeg is required to render {}", output.display()),
        });
    }
    let mut graph = String::new();
    for (i, (a, b)) in cuts.iter().enumerate() {
        graph.push_str(&format!(
            "[0:v]trim=start={:.6}:end={:.6},setpts=PTS-STARTPTS[v{i}];",
            *a as f64 / fps,
            *b as f64 / fps
        ));
    }
    for i in 0..cuts.len() {
        graph.push_str(&format!("[v{i}]"));
    }
    graph.push_str(&format!("concat=n={}:v=1:a=0[out]", cuts.len()));
    let out = Command::new("ffmpeg")
        .args(["-y", "-v", "error", "-i"])
        .arg(source)
        .args(["-filter_complex", &graph, "-map", "[out]"])
        .arg(output)
        .output()?;
    if !out.status.success() {
        return Err(HighlightError::RenderToolFailure {
            status: out.status.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    backend_for(output)?;
    Ok(())
}
