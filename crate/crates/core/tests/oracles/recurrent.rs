//! Definitional identities for the bidirectional LSTM and softmax.

use clipforge::nn::{bilstm_forward, lstm_forward_sequence, softmax, BiMode, LstmCellParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_cell(d: usize, h: usize, rng: &mut impl Rng) -> LstmCellParams<f64> {
    let mut p = LstmCellParams::zeros(d, h);
    for v in p.kernel.iter_mut().chain(&mut p.recurrent).chain(&mut p.bias) {
        *v = rng.random_range(-1.0..1.0);
    }
    p
}

/// Max deviation between the backward half of the sequence-mode output and
/// a forward-only run over the time-reversed input, re-reversed.
pub fn reversal_identity_err(features: &[f64], fwd: &LstmCellParams<f64>, bwd: &LstmCellParams<f64>) -> f64 {
    let (d, h) = (fwd.input_size, fwd.hidden);
    let t = features.len() / d;
    let seq = bilstm_forward(features, &fwd.view(), &bwd.view(), BiMode::Sequence).unwrap();
    let reversed: Vec<f64> = (0..t).rev().flat_map(|i| features[i * d..(i + 1) * d].to_vec()).collect();
    let mut traj = lstm_forward_sequence(&reversed, &bwd.view()).unwrap();
    traj.reverse();
    let forward = lstm_forward_sequence(features, &fwd.view()).unwrap();
    let mut worst = 0.0f64;
    for i in 0..t {
        let row = &seq[i * 2 * h..(i + 1) * 2 * h];
        for j in 0..h {
            worst = worst.max((row[j] - forward[i][j]).abs());
            worst = worst.max((row[h + j] - traj[i][j]).abs());
        }
    }
    worst
}

/// Runs the reversal identity on `n` random problems with T, D, H in small
/// ranges; returns the worst deviation.
pub fn reversal_identity_sweep(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (t, d, h) = (rng.random_range(1..=16), rng.random_range(1..=8), rng.random_range(1..=6));
        let fwd = random_cell(d, h, &mut rng);
        let bwd = random_cell(d, h, &mut rng);
        let x: Vec<f64> = (0..t * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        worst = worst.max(reversal_identity_err(&x, &fwd, &bwd));
    }
    worst
}

/// Max of `|Σp − 1|` and of any negative entry over `n` random logit vectors.
pub fn softmax_sweep(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let k = rng.random_range(1..=10);
        let scale = [1.0, 10.0, 100.0, 1000.0][rng.random_range(0..4)];
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-scale..scale)).collect();
        let p = softmax(&z);
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        worst = worst.max(p.iter().fold(0.0f64, |a, &v| a.max(-v)));
    }
    worst
}
