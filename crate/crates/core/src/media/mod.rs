//! Video probing, frame sampling and clip tensor construction.
//!
//! Every source is resampled to [`PROCESSING_FPS`] before indexing, so a
//! 16-frame window always spans one second of wall-clock time.

mod decode;
mod frame;

use std::collections::VecDeque;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use decode::{
    backend_for, ffmpeg_available, open_source, stream_info, write_y4m, Backend, SourceFrames, StreamInfo,
    Y4mFrames, Y4mWriter,
};
pub use frame::{resize_normalize, resize_normalize_to, Frame};

pub const SEQUENCE_LENGTH: usize = 16;
pub const IMAGE_HEIGHT: usize = 64;
pub const IMAGE_WIDTH: usize = 64;
pub const CHANNELS: usize = 3;
pub const PROCESSING_FPS: f64 = 16.0;
/// Elements in one normalized 64×64 RGB frame.
pub const FRAME_LEN: usize = IMAGE_HEIGHT * IMAGE_WIDTH * CHANNELS;
/// Elements in one clip tensor.
pub const CLIP_LEN: usize = SEQUENCE_LENGTH * FRAME_LEN;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("video file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("cannot decode {}: {reason}", path.display())]
    DecodeError { path: PathBuf, reason: String },
    #[error("video has no frames: {}", .0.display())]
    EmptyVideo(PathBuf),
    #[error("expected 3 colour channels, got {0}")]
    BadChannelCount(usize),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid clip tensor: {0}")]
    InvalidClip(String),
    #[error("window stride must be at least 1 frame")]
    InvalidStride,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Probed video facts. `frame_count`, `fps` and `duration_sec` describe the
/// stream after resampling to 16 fps; `source_*` keep the native values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub source_id: String,
    pub path: PathBuf,
    pub fps: f64,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub duration_sec: f64,
    pub source_fps: f64,
    pub source_frame_count: usize,
}

impl VideoMeta {
    /// Source frame index shown at resampled frame `k`.
    pub fn source_index(&self, k: usize) -> usize {
        let idx = (k as f64 * self.source_fps / PROCESSING_FPS + 1e-9).floor() as usize;
        idx.min(self.source_frame_count.saturating_sub(1))
    }

    fn stream_info(&self) -> Result<StreamInfo, MediaError> {
        Ok(StreamInfo {
            backend: backend_for(&self.path)?,
            width: self.width,
            height: self.height,
            fps: self.source_fps,
            frame_count: self.source_frame_count,
        })
    }
}

/// Number of frames once `n_source` frames at `source_fps` are resampled to 16 fps.
pub fn resampled_frame_count(n_source: usize, source_fps: f64) -> usize {
    if n_source == 0 {
        return 0;
    }
    let n = (n_source as f64 * PROCESSING_FPS / source_fps + 1e-9).floor() as usize;
    n.max(1)
}

pub fn probe_video(path: &Path) -> Result<VideoMeta, MediaError> {
    if !path.exists() {
        return Err(MediaError::MissingFile(path.to_path_buf()));
    }
    let info = stream_info(path)?;
    if info.frame_count == 0 {
        return Err(MediaError::EmptyVideo(path.to_path_buf()));
    }
    let frame_count = resampled_frame_count(info.frame_count, info.fps);
    Ok(VideoMeta {
        source_id: content_id(path)?,
        path: path.to_path_buf(),
        fps: PROCESSING_FPS,
        frame_count,
        width: info.width,
        height: info.height,
        duration_sec: frame_count as f64 / PROCESSING_FPS,
        source_fps: info.fps,
        source_frame_count: info.frame_count,
    })
}

/// First 16 hex digits of the SHA-256 of the file contents.
pub fn content_id(path: &Path) -> Result<String, MediaError> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Resampled 16 fps frame stream.
pub struct ResampledFrames {
    meta: VideoMeta,
    source: Box<dyn SourceFrames>,
    next_out: usize,
    next_src: usize,
    current: Option<Frame>,
}

impl ResampledFrames {
    pub fn open(meta: &VideoMeta) -> Result<Self, MediaError> {
        let info = meta.stream_info()?;
        Ok(Self { meta: meta.clone(), source: open_source(&meta.path, &info)?, next_out: 0, next_src: 0, current: None })
    }

    /// Next `(resampled_index, frame)` pair, or `None` at the end.
    pub fn next_frame(&mut self) -> Result<Option<(usize, Frame)>, MediaError> {
        if self.next_out >= self.meta.frame_count {
            return Ok(None);
        }
        let want = self.meta.source_index(self.next_out);
        while self.current.is_none() || self.next_src <= want {
            match self.source.next_frame()? {
                Some(f) => {
                    self.current = Some(f);
                    self.next_src += 1;
                }
                None if self.current.is_some() => break,
                None => return Err(MediaError::EmptyVideo(self.meta.path.clone())),
            }
        }
        let k = self.next_out;
        self.next_out += 1;
        Ok(self.current.clone().map(|f| (k, f)))
    }
}

/// Where a clip came from, in resampled frame indices (inclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipOrigin {
    pub source_id: String,
    pub first_source_frame: usize,
    pub last_source_frame: usize,
}

/// A `(16, 64, 64, 3)` tensor of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTensor {
    data: Vec<f32>,
    pub origin: ClipOrigin,
}

impl ClipTensor {
    pub const SHAPE: [usize; 4] = [SEQUENCE_LENGTH, IMAGE_HEIGHT, IMAGE_WIDTH, CHANNELS];

    pub fn new(data: Vec<f32>, origin: ClipOrigin) -> Result<Self, MediaError> {
        if data.len() != CLIP_LEN {
            return Err(MediaError::InvalidClip(format!("expected {CLIP_LEN} elements, got {}", data.len())));
        }
        if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(MediaError::InvalidClip(format!("element {bad} = {} outside [0, 1]", data[bad])));
        }
        Ok(Self { data, origin })
    }

    pub fn from_frames(frames: &[Vec<f32>], origin: ClipOrigin) -> Result<Self, MediaError> {
        if frames.len() != SEQUENCE_LENGTH {
            return Err(MediaError::InvalidClip(format!("expected {SEQUENCE_LENGTH} frames, got {}", frames.len())));
        }
        Self::new(frames.concat(), origin)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * FRAME_LEN..(t + 1) * FRAME_LEN]
    }
}

/// Frame indices `i * skip` for `i in 0..n`, `skip = max(frame_count / n, 1)`,
/// clamped to the last frame.
pub fn uniform_indices(frame_count: usize, n: usize) -> Vec<usize> {
    let skip = (frame_count / n.max(1)).max(1);
    let last = frame_count.saturating_sub(1);
    (0..n).map(|i| (i * skip).min(last)).collect()
}

pub fn sample_clip_uniform(video: &VideoMeta) -> Result<ClipTensor, MediaError> {
    if video.frame_count == 0 {
        return Err(MediaError::EmptyVideo(video.path.clone()));
    }
    let indices = uniform_indices(video.frame_count, SEQUENCE_LENGTH);
    let frames = read_frames(video, &indices)?;
    let origin = ClipOrigin {
        source_id: video.source_id.clone(),
        first_source_frame: indices[0],
        last_source_frame: *indices.last().unwrap(),
    };
    ClipTensor::from_frames(&frames, origin)
}

/// Normalized frames at the given resampled indices (any order, repeats allowed).
pub fn read_frames(video: &VideoMeta, indices: &[usize]) -> Result<Vec<Vec<f32>>, MediaError> {
    let Some(&max) = indices.iter().max() else {
        return Ok(Vec::new());
    };
    let mut stream = ResampledFrames::open(video)?;
    let mut decoded: Vec<Option<Vec<f32>>> = vec![None; max + 1];
    while let Some((k, frame)) = stream.next_frame()? {
        if indices.contains(&k) {
            decoded[k] = Some(resize_normalize(&frame)?);
        }
        if k >= max {
            break;
        }
    }
    indices
        .iter()
        .map(|&i| {
            decoded[i]
                .clone()
                .ok_or_else(|| MediaError::InvalidClip(format!("frame {i} beyond end of {}", video.path.display())))
        })
        .collect()
}

/// A 16-frame window in resampled frame space. `end_frame` is exclusive and
/// equals `start_frame + 16` except for videos shorter than one window,
/// where it is the video length (the clip is padded at sampling time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

impl WindowSpec {
    pub fn new(start_frame: usize, end_frame: usize) -> Self {
        Self {
            start_frame,
            end_frame,
            start_sec: start_frame as f64 / PROCESSING_FPS,
            end_sec: end_frame as f64 / PROCESSING_FPS,
        }
    }
}

pub fn window_starts(frame_count: usize, stride_frames: usize) -> Vec<usize> {
    if frame_count < SEQUENCE_LENGTH {
        return vec![0];
    }
    (0..=frame_count - SEQUENCE_LENGTH).step_by(stride_frames).collect()
}

pub fn sliding_windows(video: &VideoMeta, stride_frames: usize) -> Result<Vec<WindowSpec>, MediaError> {
    if stride_frames == 0 {
        return Err(MediaError::InvalidStride);
    }
    if video.frame_count == 0 {
        return Err(MediaError::EmptyVideo(video.path.clone()));
    }
    Ok(window_starts(video.frame_count, stride_frames)
        .into_iter()
        .map(|s| WindowSpec::new(s, (s + SEQUENCE_LENGTH).min(video.frame_count)))
        .collect())
}

/// Streams `(window, clip)` pairs in window order while holding at most one
/// window's worth of decoded frames.
pub struct WindowClips {
    meta: VideoMeta,
    windows: std::vec::IntoIter<WindowSpec>,
    stream: ResampledFrames,
    buffer: VecDeque<(usize, Vec<f32>)>,
    exhausted: bool,
}

impl WindowClips {
    pub fn new(video: &VideoMeta, stride_frames: usize) -> Result<Self, MediaError> {
        let windows = sliding_windows(video, stride_frames)?;
        Ok(Self {
            meta: video.clone(),
            windows: windows.into_iter(),
            stream: ResampledFrames::open(video)?,
            buffer: VecDeque::new(),
            exhausted: false,
        })
    }

    fn next_clip(&mut self) -> Result<Option<(WindowSpec, ClipTensor)>, MediaError> {
        let Some(window) = self.windows.next() else {
            return Ok(None);
        };
        let last = window.end_frame - 1;
        while !self.exhausted && self.buffer.back().is_none_or(|(k, _)| *k < last) {
            match self.stream.next_frame()? {
                Some((k, f)) => self.buffer.push_back((k, resize_normalize(&f)?)),
                None => self.exhausted = true,
            }
        }
        while self.buffer.front().is_some_and(|(k, _)| *k < window.start_frame) {
            self.buffer.pop_front();
        }
        let available: Vec<&Vec<f32>> =
            self.buffer.iter().filter(|(k, _)| *k <= last).map(|(_, f)| f).collect();
        let Some(&tail) = available.last() else {
            return Err(MediaError::EmptyVideo(self.meta.path.clone()));
        };
        let mut data = Vec::with_capacity(CLIP_LEN);
        for t in 0..SEQUENCE_LENGTH {
            data.extend_from_slice(available.get(t).copied().unwrap_or(tail));
        }
        let origin = ClipOrigin {
            source_id: self.meta.source_id.clone(),
            first_source_frame: window.start_frame,
            last_source_frame: window.start_frame + available.len() - 1,
        };
        Ok(Some((window, ClipTensor::new(data, origin)?)))
    }
}

impl Iterator for WindowClips {
    type Item = Result<(WindowSpec, ClipTensor), MediaError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_clip().transpose()
    }
}
