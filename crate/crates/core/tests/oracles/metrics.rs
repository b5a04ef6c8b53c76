//! Hand-written classification formulas and a brute-force confusion tally.

use clipforge::evaluator::{confusion, metrics, ConfusionMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (SE, SP, ACC, PE, F1) straight from the textbook definitions, with 0 for
/// any zero denominator.
pub fn formulas(tp: f64, fp: f64, tn: f64, fn_: f64) -> [f64; 5] {
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let se = div(tp, tp + fn_);
    let sp = div(tn, tn + fp);
    let acc = div(tn + tp, tn + tp + fn_ + fp);
    let pe = div(tp, tp + fp);
    let f1 = if pe + se == 0.0 { 0.0 } else { 2.0 * (pe * se) / (pe + se) };
    [se, sp, acc, pe, f1]
}

pub fn random_matrix(rng: &mut ChaCha8Rng) -> ConfusionMatrix {
    let hi = [3u64, 50, 10_000][rng.random_range(0..3)];
    loop {
        let cm = ConfusionMatrix {
            tp: rng.random_range(0..=hi),
            fp: rng.random_range(0..=hi),
            tn: rng.random_range(0..=hi),
            fn_: rng.random_range(0..=hi),
        };
        if cm.total() > 0 {
            return cm;
        }
    }
}

#[derive(Debug, Default)]
pub struct FormulaReport {
    pub cases: usize,
    pub max_abs_err: f64,
    pub perfect_ok: bool,
    pub symmetric_ok: bool,
}

pub fn formula_sweep(n: usize, seed: u64) -> FormulaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_err: f64 = 0.0;
    for _ in 0..n {
        let cm = random_matrix(&mut rng);
        let r = metrics(&cm).unwrap();
        let want = formulas(cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
        let got = [r.sensitivity, r.specificity, r.accuracy, r.precision, r.f1];
        for (a, b) in got.iter().zip(want) {
            max_abs_err = max_abs_err.max((a - b).abs());
        }
    }
    let all = |cm: ConfusionMatrix, v: f64| {
        let r = metrics(&cm).unwrap();
        [r.sensitivity, r.specificity, r.accuracy, r.precision, r.f1].iter().all(|&x| x == v)
    };
    FormulaReport {
        cases: n,
        max_abs_err,
        perfect_ok: all(ConfusionMatrix { tp: 1, tn: 1, fp: 0, fn_: 0 }, 1.0),
        symmetric_ok: all(ConfusionMatrix { tp: 25, tn: 25, fp: 25, fn_: 25 }, 0.5),
    }
}

/// Counts by enumerating the four cells separately.
pub fn tally(pred: &[usize], truth: &[usize]) -> ConfusionMatrix {
    let count = |p: usize, t: usize| pred.iter().zip(truth).filter(|&(&a, &b)| a == p && b == t).count() as u64;
    ConfusionMatrix { tp: count(1, 1), fp: count(1, 0), tn: count(0, 0), fn_: count(0, 1) }
}

pub fn confusion_sweep(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter(|_| {
            let len = rng.random_range(1..200);
            let pred: Vec<usize> = (0..len).map(|_| rng.random_range(0..2)).collect();
            let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..2)).collect();
            confusion(&pred, &truth).unwrap() != tally(&pred, &truth)
        })
        .count()
}
