//! Central-difference gradient oracle.

use clipforge::nn::{categorical_crossentropy, one_hot, Mode, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
/// Denominator floor: central differences of an O(1) loss carry roughly
/// 1e-11 of roundoff, which would swamp gradients near 1e-8.
pub const SCALE_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

pub fn random_clips(clip_len: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..clip_len).map(|_| rng.random::<f64>()).collect()).collect()
}

pub fn batch_loss(model: &Model<f64>, clips: &[Vec<f64>], labels: &[usize], mode: Mode) -> f64 {
    let refs: Vec<&[f64]> = clips.iter().map(Vec::as_slice).collect();
    let probs = model.forward(&refs, mode).unwrap();
    let y: Vec<Vec<f64>> = labels.iter().map(|&c| one_hot(c, model.config.num_classes)).collect();
    categorical_crossentropy(&probs, &y).unwrap()
}

/// Shifts every bias away from zero so no ReLU input sits on its kink.
/// Encoder biases become positive so the small encoder stays alive.
pub fn jitter_biases(model: &mut Model<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params.tensors_mut() {
        if t.name.ends_with("bias") {
            let signed = !t.name.starts_with("encoder.");
            for v in &mut t.data {
                let sign = if signed && rng.random::<bool>() { -1.0 } else { 1.0 };
                *v += sign * rng.random_range(0.05..0.3);
            }
        }
    }
}

#[derive(Debug)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
    pub worst: (usize, f64, f64),
}

/// Compares the analytic gradient of every trainable tensor, element by
/// element, against central differences of the batch loss.
pub fn check_all(model: &mut Model<f64>, clips: &[Vec<f64>], labels: &[usize], mode: Mode) -> Vec<TensorCheck> {
    let refs: Vec<&[f64]> = clips.iter().map(Vec::as_slice).collect();
    let out = model.backward(&refs, labels, mode).unwrap();
    let names: Vec<String> = out.grads.names().map(str::to_string).collect();
    let mut report = Vec::new();
    for name in names {
        let analytic = out.grads.get(&name).unwrap().to_vec();
        let mut check = TensorCheck {
            name: name.clone(),
            max_rel_err: 0.0,
            max_abs_grad: analytic.iter().fold(0.0f64, |a, g| a.max(g.abs())),
            worst: (0, 0.0, 0.0),
        };
        for (i, &a) in analytic.iter().enumerate() {
            let orig = model.params.get(&name).unwrap().data[i];
            model.params.get_mut(&name).unwrap().data[i] = orig + EPS;
            let up = batch_loss(model, clips, labels, mode);
            model.params.get_mut(&name).unwrap().data[i] = orig - EPS;
            let down = batch_loss(model, clips, labels, mode);
            model.params.get_mut(&name).unwrap().data[i] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let e = rel_err(a, numeric);
            if e > check.max_rel_err {
                check.max_rel_err = e;
                check.worst = (i, a, numeric);
            }
        }
        report.push(check);
    }
    report
}
