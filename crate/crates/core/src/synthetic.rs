//! Synthetic labelled videos whose class lives in motion, not appearance.
//!
//! Each clip shows a few coloured blocks over a checkered backdrop. Calm
//! clips drift the blocks slowly under a steady camera and hold their size
//! and brightness fixed. Violent clips jump the blocks by up to
//! `violent_motion_amplitude` pixels per frame, shake the camera, and redraw
//! size and brightness every frame from the same ranges a calm clip draws
//! them from once. Frames integrate over a short exposure, so fast motion
//! smears while slow drift stays sharp.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::media::{write_y4m, Frame, MediaError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("violent intervals overlap or are out of range: {0}")]
    OverlappingIntervals(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub duration_sec: f64,
    pub fps: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Maximum per-frame block displacement in violent footage, pixels.
    pub violent_motion_amplitude: f64,
    /// Drift speed in calm footage, pixels per frame.
    pub calm_motion_amplitude: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_per_class: 10,
            duration_sec: 1.0,
            fps: 16,
            width: 80,
            height: 60,
            seed: 0,
            violent_motion_amplitude: 16.0,
            calm_motion_amplitude: 0.6,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.calm_motion_amplitude <= 0.0 || self.violent_motion_amplitude <= self.calm_motion_amplitude {
            return bad("amplitudes must be positive with violent > calm");
        }
        if self.fps == 0 || self.width < 16 || self.height < 16 {
            return bad("fps must be positive and frames at least 16×16");
        }
        if !(self.duration_sec > 0.0) || self.frames_for(self.duration_sec) == 0 {
            return bad("duration must cover at least one frame");
        }
        Ok(())
    }

    fn frames_for(&self, sec: f64) -> usize {
        (sec * self.fps as f64).round() as usize
    }
}

const SIZE_RANGE: (f64, f64) = (0.9, 1.1);
const GAIN_RANGE: (f64, f64) = (0.85, 1.0);
const BLOCKS: usize = 3;
const EXPOSURE_STEPS: usize = 8;
/// Background texture cell edge, pixels.
const CELL: usize = 4;
/// Texture margin around the visible frame, available to camera shake.
const MARGIN: usize = 16;

#[derive(Debug, Clone)]
struct Block {
    x: f64,
    y: f64,
    prev_x: f64,
    prev_y: f64,
    vx: f64,
    vy: f64,
    base_w: f64,
    base_h: f64,
    color: [f64; 3],
    size: f64,
    gain: f64,
}

/// One clip's scene state; advanced frame by frame.
struct Scene {
    w: usize,
    h: usize,
    /// Grayscale backdrop of `(w + 2·MARGIN) × (h + 2·MARGIN)` pixels.
    texture: Vec<f64>,
    cam: (f64, f64),
    prev_cam: (f64, f64),
    blocks: Vec<Block>,
    rng: ChaCha8Rng,
}

impl Scene {
    fn new(spec: &SynthSpec, mut rng: ChaCha8Rng) -> Self {
        let (w, h) = (spec.width, spec.height);
        let (tw, th) = (w + 2 * MARGIN, h + 2 * MARGIN);
        let (cw, ch) = (tw.div_ceil(CELL), th.div_ceil(CELL));
        let cells: Vec<f64> = (0..cw * ch).map(|_| rng.random_range(60.0..200.0)).collect();
        let texture = (0..th).flat_map(|y| (0..tw).map(move |x| (x, y))).map(|(x, y)| cells[(y / CELL) * cw + x / CELL]).collect();
        let blocks = (0..BLOCKS)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let (x, y) = (rng.random_range(0.15..0.85) * w as f64, rng.random_range(0.15..0.85) * h as f64);
                Block {
                    x,
                    y,
                    prev_x: x,
                    prev_y: y,
                    vx: angle.cos() * spec.calm_motion_amplitude,
                    vy: angle.sin() * spec.calm_motion_amplitude,
                    base_w: rng.random_range(0.18..0.22) * w as f64,
                    base_h: rng.random_range(0.24..0.28) * h as f64,
                    color: [rng.random_range(215.0..245.0), rng.random_range(180.0..210.0), rng.random_range(150.0..180.0)],
                    size: rng.random_range(SIZE_RANGE.0..SIZE_RANGE.1),
                    gain: rng.random_range(GAIN_RANGE.0..GAIN_RANGE.1),
                }
            })
            .collect();
        Self { w, h, texture, cam: (0.0, 0.0), prev_cam: (0.0, 0.0), blocks, rng }
    }

    fn step_calm(&mut self) {
        let (w, h) = (self.w as f64, self.h as f64);
        self.prev_cam = self.cam;
        for b in &mut self.blocks {
            (b.prev_x, b.prev_y) = (b.x, b.y);
            b.x += b.vx;
            b.y += b.vy;
            if b.x < 0.0 || b.x > w {
                b.vx = -b.vx;
                b.x = b.x.clamp(0.0, w);
            }
            if b.y < 0.0 || b.y > h {
                b.vy = -b.vy;
                b.y = b.y.clamp(0.0, h);
            }
        }
    }

    /// Blocks jump and the camera shakes, by up to `amplitude` pixels.
    fn step_violent(&mut self, amplitude: f64) {
        let (w, h) = (self.w as f64, self.h as f64);
        let m = MARGIN as f64;
        self.prev_cam = self.cam;
        let shake = amplitude.min(m);
        self.cam.0 = (self.cam.0 + self.rng.random_range(-shake..shake)).clamp(-m, m);
        self.cam.1 = (self.cam.1 + self.rng.random_range(-shake..shake)).clamp(-m, m);
        for b in &mut self.blocks {
            (b.prev_x, b.prev_y) = (b.x, b.y);
            b.x = (b.x + self.rng.random_range(-amplitude..amplitude)).clamp(0.0, w);
            b.y = (b.y + self.rng.random_range(-amplitude..amplitude)).clamp(0.0, h);
            b.size = self.rng.random_range(SIZE_RANGE.0..SIZE_RANGE.1);
            b.gain = self.rng.random_range(GAIN_RANGE.0..GAIN_RANGE.1);
        }
    }

    /// Averages `EXPOSURE_STEPS` sharp renders between the previous and the
    /// current state, so anything that moved during the frame is smeared.
    fn render(&self) -> Frame {
        let (w, h) = (self.w, self.h);
        let tw = w + 2 * MARGIN;
        let mut acc = vec![0.0f64; w * h * 3];
        let mut sharp = vec![0.0f64; w * h * 3];
        for s in 0..EXPOSURE_STEPS {
            let a = (s as f64 + 0.5) / EXPOSURE_STEPS as f64;
            let lerp = |p: f64, q: f64| p + (q - p) * a;
            let ox = (lerp(self.prev_cam.0, self.cam.0).round() as isize + MARGIN as isize) as usize;
            let oy = (lerp(self.prev_cam.1, self.cam.1).round() as isize + MARGIN as isize) as usize;
            for y in 0..h {
                let row = &self.texture[(y + oy) * tw + ox..];
                for x in 0..w {
                    sharp[(y * w + x) * 3..(y * w + x) * 3 + 3].fill(row[x]);
                }
            }
            for b in &self.blocks {
                let (hw, hh) = (b.base_w * b.size / 2.0, b.base_h * b.size / 2.0);
                let (cx, cy) = (lerp(b.prev_x, b.x), lerp(b.prev_y, b.y));
                let x0 = (cx - hw).round().max(0.0) as usize;
                let x1 = ((cx + hw).round().max(0.0) as usize).min(w);
                let y0 = (cy - hh).round().max(0.0) as usize;
                let y1 = ((cy + hh).round().max(0.0) as usize).min(h);
                for y in y0..y1 {
                    for x in x0.min(x1)..x1 {
                        for k in 0..3 {
                            sharp[(y * w + x) * 3 + k] = b.color[k] * b.gain;
                        }
                    }
                }
            }
            for (t, v) in acc.iter_mut().zip(&sharp) {
                *t += v;
            }
        }
        let data = acc.into_iter().map(|v| (v / EXPOSURE_STEPS as f64).round().clamp(0.0, 255.0) as u8).collect();
        Frame::new(w, h, 3, data).expect("frame buffer matches dimensions")
    }
}

fn clip_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pixel frames of clip `index` of class `label`, before any encoding.
pub fn render_clip(spec: &SynthSpec, label: Label, index: usize) -> Vec<Frame> {
    let stream = ((label.index() as u64) << 32) | index as u64;
    let mut scene = Scene::new(spec, clip_rng(spec.seed, stream));
    let n = spec.frames_for(spec.duration_sec);
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        match label {
            Label::Violence => scene.step_violent(spec.violent_motion_amplitude),
            Label::NonViolence => scene.step_calm(),
        }
        frames.push(scene.render());
    }
    frames
}

/// Mean absolute difference between consecutive frames.
pub fn motion_energy(frames: &[Frame]) -> f64 {
    if frames.len() < 2 {
        return 0.0;
    }
    frames.windows(2).map(|w| w[0].mean_abs_diff(&w[1])).sum::<f64>() / (frames.len() - 1) as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedClip {
    pub path: PathBuf,
    pub label: Label,
    pub index: usize,
    pub motion_energy: f64,
}

/// Writes `n_per_class` clips per class into `out/<class>/`, one `.y4m`
/// file each.
pub fn generate(spec: &SynthSpec, out: &Path) -> Result<Vec<GeneratedClip>, SynthError> {
    spec.validate()?;
    for label in Label::ALL {
        fs::create_dir_all(out.join(label.name()))?;
    }
    let jobs: Vec<(Label, usize)> =
        Label::ALL.iter().flat_map(|&l| (0..spec.n_per_class).map(move |i| (l, i))).collect();
    jobs.par_iter()
        .map(|&(label, index)| {
            let frames = render_clip(spec, label, index);
            let stem = match label {
                Label::Violence => "fight",
                Label::NonViolence => "calm",
            };
            let path = out.join(label.name()).join(format!("{stem}_{index:04}.y4m"));
            write_y4m(&path, &frames, spec.fps)?;
            Ok(GeneratedClip { path, label, index, motion_energy: motion_energy(&frames) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub duration_sec: f64,
    pub fps: usize,
    pub violent_intervals: Vec<(f64, f64)>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        serde_json::from_slice(&fs::read(path)?).map_err(|e| SynthError::Io(std::io::Error::other(e)))
    }
}

/// Renders one continuous scene that is calm except inside
/// `violent_intervals`, writes it to `video`, and the ground truth to
/// `video` with a `.json` extension.
pub fn generate_composite(
    spec: &SynthSpec,
    duration_sec: f64,
    violent_intervals: &[(f64, f64)],
    video: &Path,
) -> Result<GroundTruth, SynthError> {
    spec.validate()?;
    let mut sorted = violent_intervals.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (i, &(s, e)) in sorted.iter().enumerate() {
        if !(s >= 0.0 && e > s && e <= duration_sec) || (i > 0 && s < sorted[i - 1].1) {
            return Err(SynthError::OverlappingIntervals(format!("{violent_intervals:?} in {duration_sec} s")));
        }
    }
    let n = spec.frames_for(duration_sec);
    if n == 0 {
        return Err(SynthError::InvalidSpec("composite duration covers no frames".into()));
    }
    let mut scene = Scene::new(spec, clip_rng(spec.seed, u64::MAX));
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 + 0.5) / spec.fps as f64;
        if sorted.iter().any(|&(s, e)| t >= s && t < e) {
            scene.step_violent(spec.violent_motion_amplitude);
        } else {
            scene.step_calm();
        }
        frames.push(scene.render());
    }
    write_y4m(video, &frames, spec.fps)?;
    let truth = GroundTruth { duration_sec, fps: spec.fps, violent_intervals: sorted };
    let json = serde_json::to_vec_pretty(&truth).map_err(std::io::Error::other)?;
    fs::write(video.with_extension("json"), json)?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec { n_per_class: 6, seed: 4, ..SynthSpec::default() }
    }

    #[test]
    fn same_seed_same_pixels() {
        let s = small();
        assert_eq!(render_clip(&s, Label::Violence, 3), render_clip(&s, Label::Violence, 3));
        assert_ne!(render_clip(&s, Label::Violence, 3), render_clip(&s, Label::Violence, 4));
    }

    #[test]
    fn violent_clips_move_more_than_calm_ones() {
        let s = small();
        let stats = |l| (0..20).map(|i| motion_energy(&render_clip(&s, l, i))).collect::<Vec<_>>();
        let (calm, violent) = (stats(Label::NonViolence), stats(Label::Violence));
        let max_calm = calm.iter().cloned().fold(f64::MIN, f64::max);
        let min_violent = violent.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min_violent > max_calm, "{min_violent} <= {max_calm}");
    }

    #[test]
    fn generates_class_folders() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = small();
        s.n_per_class = 3;
        let clips = generate(&s, dir.path()).unwrap();
        assert_eq!(clips.len(), 6);
        for l in Label::ALL {
            assert_eq!(fs::read_dir(dir.path().join(l.name())).unwrap().count(), 3);
        }
    }

    #[test]
    fn composite_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.y4m");
        let gt = generate_composite(&small(), 12.0, &[(7.0, 9.0), (2.0, 4.0)], &path).unwrap();
        assert_eq!(gt.violent_intervals, vec![(2.0, 4.0), (7.0, 9.0)]);
        assert_eq!(GroundTruth::load(&path.with_extension("json")).unwrap(), gt);
        let calm = generate_composite(&small(), 3.0, &[], &path).unwrap();
        assert!(calm.violent_intervals.is_empty());
        assert!(matches!(
            generate_composite(&small(), 12.0, &[(2.0, 5.0), (4.0, 6.0)], &path),
            Err(SynthError::OverlappingIntervals(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = small();
        s.violent_motion_amplitude = 0.1;
        assert!(s.validate().is_err());
    }
}
