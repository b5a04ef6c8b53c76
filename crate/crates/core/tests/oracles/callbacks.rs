//! Straight-line reference for the plateau and early-stop rules, driven by
//! scripted validation metrics.

use clipforge::nn::{ModelConfig, ModelParams};
use clipforge::trainer::{Callbacks, StopDecision, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DELTA: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Script {
    pub cfg: TrainConfig,
    pub val_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Learning rate in effect during each epoch that ran.
    pub lrs: Vec<f64>,
    pub stopped: bool,
    pub best_epoch: usize,
    /// Epoch whose weights end up in the model, if any were snapshotted.
    pub restored_epoch: Option<usize>,
}

/// Reference: improvement flags first, then counters by distance from the
/// last reset.
pub fn simulate(s: &Script) -> Outcome {
    let n = s.val_loss.len();
    let mut loss_improved = vec![false; n];
    let mut best = f64::INFINITY;
    for e in 0..n {
        if s.val_loss[e] < best - DELTA {
            loss_improved[e] = true;
            best = s.val_loss[e];
        }
    }
    let mut acc_improved = vec![false; n];
    let mut best = f64::NEG_INFINITY;
    for e in 0..n {
        if s.val_acc[e] > best + DELTA {
            acc_improved[e] = true;
            best = s.val_acc[e];
        }
    }

    let mut last_acc_improvement: Option<usize> = None;
    let mut ran = n;
    let mut stopped = false;
    for e in 0..n {
        if acc_improved[e] {
            last_acc_improvement = Some(e);
        }
        let stale = match last_acc_improvement {
            Some(i) => e - i,
            None => e + 1,
        };
        if stale >= s.cfg.earlystop_patience {
            ran = e + 1;
            stopped = true;
            break;
        }
    }

    let mut lrs = Vec::with_capacity(ran);
    let mut lr = s.cfg.initial_lr;
    let mut last_reset: Option<usize> = None;
    for e in 0..ran {
        lrs.push(lr);
        if loss_improved[e] {
            last_reset = Some(e);
            continue;
        }
        let stale = match last_reset {
            Some(i) => e - i,
            None => e + 1,
        };
        if stale >= s.cfg.plateau_patience {
            lr = (lr * s.cfg.plateau_factor).max(s.cfg.min_lr);
            last_reset = Some(e);
        }
    }

    let best_epoch = (0..ran).filter(|&e| acc_improved[e]).last().map_or(0, |e| e + 1);
    Outcome { lrs, stopped, best_epoch, restored_epoch: (best_epoch > 0).then_some(best_epoch) }
}

/// Drives the library callbacks with the script. Each epoch stamps its
/// number into a parameter so the restored snapshot can be identified.
pub fn run_callbacks(s: &Script) -> Outcome {
    let mut params = ModelParams::<f64>::init(&ModelConfig::tiny(), 0).unwrap();
    let mut cb = Callbacks::<f64>::new(&s.cfg);
    let mut lrs = Vec::new();
    let mut stopped = false;
    for e in 0..s.val_loss.len() {
        lrs.push(cb.lr());
        params.get_mut("head.output.bias").unwrap().data[0] = (e + 1) as f64;
        if cb.end_epoch(e + 1, s.val_loss[e], s.val_acc[e], &params) == StopDecision::Stop {
            stopped = true;
            break;
        }
    }
    params.get_mut("head.output.bias").unwrap().data[0] = -1.0;
    let (best_epoch, restored) = cb.restore_best(&mut params);
    let stamp = params.get("head.output.bias").unwrap().data[0];
    Outcome { lrs, stopped, best_epoch, restored_epoch: restored.then_some(stamp as usize) }
}

/// Metric scripts with plateaus, near-ties around the improvement margin,
/// and long flat tails that drive the learning rate down to its floor.
pub fn random_script(rng: &mut ChaCha8Rng) -> Script {
    let mut cfg = TrainConfig::default();
    if rng.random_bool(0.5) {
        cfg.plateau_factor = [0.1, 0.5, 0.6][rng.random_range(0..3)];
        cfg.plateau_patience = rng.random_range(1..7);
        cfg.earlystop_patience = rng.random_range(1..15);
        cfg.initial_lr = [0.01, 0.001, 1e-4][rng.random_range(0..3)];
    }
    let n = rng.random_range(1..=cfg.max_epochs);
    let steps = [-0.05, -2e-4, -1e-4, -5e-5, 0.0, 0.0, 5e-5, 0.03];
    let mut loss: f64 = rng.random_range(0.3..1.0);
    let mut acc = rng.random_range(0..32) as f64 / 32.0;
    let flat_from = rng.random_range(0..=n);
    let mut val_loss = Vec::with_capacity(n);
    let mut val_acc = Vec::with_capacity(n);
    for e in 0..n {
        if e < flat_from {
            loss = (loss + steps[rng.random_range(0..steps.len())]).max(0.0);
            acc = (acc + [-1.0 / 32.0, 0.0, 0.0, 5e-5, 1e-4, 1.0 / 32.0][rng.random_range(0..6)]).clamp(0.0, 1.0);
        }
        val_loss.push(loss);
        val_acc.push(acc);
    }
    Script { cfg, val_loss, val_acc }
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub cases: usize,
    pub mismatches: usize,
    pub floor_hits: usize,
    pub restorations: usize,
    pub first_mismatch: Option<(Script, Outcome, Outcome)>,
}

pub fn sweep(n: usize, seed: u64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = SweepReport { cases: n, ..Default::default() };
    for _ in 0..n {
        let s = random_script(&mut rng);
        let want = simulate(&s);
        let got = run_callbacks(&s);
        if want.lrs.contains(&s.cfg.min_lr) {
            r.floor_hits += 1;
        }
        if want.restored_epoch.is_some() {
            r.restorations += 1;
        }
        if want != got {
            r.mismatches += 1;
            r.first_mismatch.get_or_insert((s, want, got));
        }
    }
    r
}
