//! Frame-set reference for segment extraction.

use clipforge::highlighter::{segments_from_scores, HighlightParams, Segment, WindowScore};
use clipforge::media::WindowSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FPS: f64 = 16.0;
const TOL: f64 = 1e-9;

/// Marks violent frames in a boolean timeline, fills short holes between
/// violent runs, then keeps runs long enough. Returns segments with the
/// mean and peak of the violent windows inside each.
pub fn oracle(scores: &[WindowScore], p: &HighlightParams) -> Vec<Segment> {
    let violent: Vec<&WindowScore> = scores.iter().filter(|s| s.p_violence >= p.threshold).collect();
    let n = violent.iter().map(|s| s.window.end_frame).max().unwrap_or(0);
    let mut marked = vec![false; n];
    for s in &violent {
        for f in s.window.start_frame..s.window.end_frame {
            marked[f] = true;
        }
    }
    let runs = |m: &[bool]| {
        let mut out = Vec::new();
        let mut f = 0;
        while f < m.len() {
            if m[f] {
                let a = f;
                while f < m.len() && m[f] {
                    f += 1;
                }
                out.push((a, f));
            } else {
                f += 1;
            }
        }
        out
    };
    let first = runs(&marked);
    for pair in first.windows(2) {
        let (end, next) = (pair[0].1, pair[1].0);
        if (next - end) as f64 / FPS <= p.max_gap_sec + TOL {
            marked[end..next].fill(true);
        }
    }
    runs(&marked)
        .into_iter()
        .filter(|&(a, b)| (b - a) as f64 / FPS + TOL >= p.min_len_sec)
        .map(|(a, b)| {
            let inside: Vec<f64> = violent
                .iter()
                .filter(|s| s.window.start_frame >= a && s.window.end_frame <= b)
                .map(|s| s.p_violence)
                .collect();
            Segment {
                start_frame: a,
                end_frame: b,
                start_sec: a as f64 / FPS,
                end_sec: b as f64 / FPS,
                mean_score: inside.iter().sum::<f64>() / inside.len() as f64,
                peak_score: inside.iter().cloned().fold(f64::MIN, f64::max),
            }
        })
        .collect()
}

/// Sliding-window scores over a random-length video with bursty scores.
pub fn random_scores(rng: &mut ChaCha8Rng) -> Vec<WindowScore> {
    let frames = rng.random_range(1..400usize);
    let stride = rng.random_range(1..=16usize);
    let starts: Vec<usize> = if frames < 16 { vec![0] } else { (0..=frames - 16).step_by(stride).collect() };
    let mut level: f64 = rng.random();
    starts
        .into_iter()
        .map(|s| {
            if rng.random_bool(0.2) {
                level = rng.random();
            }
            let p = match rng.random_range(0..10) {
                0 => 0.5,
                1 => 0.0,
                2 => 1.0,
                _ => (level + rng.random_range(-0.15..0.15)).clamp(0.0, 1.0),
            };
            WindowScore { window: WindowSpec::new(s, (s + 16).min(frames)), p_violence: p }
        })
        .collect()
}

pub fn random_params(rng: &mut ChaCha8Rng) -> HighlightParams {
    HighlightParams {
        threshold: [0.5, 0.3, 0.7, 0.9, 1.01][rng.random_range(0..5)],
        stride_frames: 8,
        max_gap_sec: rng.random_range(0..48) as f64 / 16.0 * [1.0, 1.03][rng.random_range(0..2)],
        min_len_sec: rng.random_range(0..64) as f64 / 16.0 * [1.0, 0.97][rng.random_range(0..2)],
    }
}

#[derive(Debug, Default)]
pub struct SegmentSweep {
    pub cases: usize,
    pub mismatches: usize,
    pub nonempty: usize,
    pub monotonic_violations: usize,
}

pub fn total_sec(segs: &[Segment]) -> f64 {
    segs.iter().map(|s| s.end_sec - s.start_sec).sum()
}

/// Oracle equivalence on `n` cases and threshold monotonicity on the first
/// `n_mono` of them with five thresholds each.
pub fn sweep(n: usize, n_mono: usize, seed: u64) -> SegmentSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = SegmentSweep { cases: n, ..Default::default() };
    for i in 0..n {
        let scores = random_scores(&mut rng);
        let params = random_params(&mut rng);
        let got = segments_from_scores(&scores, &params);
        if got != oracle(&scores, &params) {
            r.mismatches += 1;
        }
        r.nonempty += usize::from(!got.is_empty());
        if i < n_mono {
            let mut last = f64::INFINITY;
            for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let total = total_sec(&segments_from_scores(&scores, &HighlightParams { threshold: t, ..params }));
                if total > last + 1e-12 {
                    r.monotonic_violations += 1;
                }
                last = total;
            }
        }
    }
    r
}
