//! Acceptance runner: one PASS/FAIL line per primary criterion.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use clipforge::dataset::{build_manifest, preprocess, split_manifest, Split, DEFAULT_FRACTIONS};
use clipforge::evaluator::evaluate_model;
use clipforge::highlighter::{plan_video, render_highlight, HighlightParams};
use clipforge::media::{probe_video, VideoMeta};
use clipforge::nn::{count_params, Mode, Model, ModelConfig};
use clipforge::synthetic::{generate, generate_composite, SynthSpec};
use clipforge::trainer::{train, TrainConfig, TrainHistory};
use clipforge::Model32;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_formulas() -> Outcome {
    let r = oracles::metrics::formula_sweep(10_000, 2024);
    let confusion_mismatches = oracles::metrics::confusion_sweep(1_000, 2025);
    check(
        r.cases == 10_000 && r.max_abs_err <= 1e-12 && r.perfect_ok && r.symmetric_ok && confusion_mismatches == 0,
        format!(
            "{} matrices, max |err| {:.1e}, perfect {}, symmetric {}, tally mismatches {confusion_mismatches}",
            r.cases, r.max_abs_err, r.perfect_ok, r.symmetric_ok
        ),
    )
}

fn gradients() -> Outcome {
    use oracles::gradcheck::{check_all, jitter_biases, random_clips};
    let cfg = ModelConfig::tiny();
    let mut worst = 0.0f64;
    let mut tensors = 0;
    for (mode, seed) in [(Mode::Eval, 7), (Mode::Train { seed: 11 }, 4)] {
        let mut model = Model::<f64>::new(cfg.clone(), seed).unwrap();
        jitter_biases(&mut model, seed ^ 0x5eed);
        let trainable = model.params.tensors().iter().filter(|t| t.trainable).count();
        let clips = random_clips(cfg.clip_len(), 3, seed + 100);
        let report = check_all(&mut model, &clips, &[1, 0, 1], mode);
        if report.len() != trainable {
            return Err(format!("checked {} of {trainable} trainable tensors", report.len()));
        }
        if let Some(dead) = report.iter().find(|t| t.max_abs_grad <= 1e-9) {
            return Err(format!("{} has an all-zero gradient", dead.name));
        }
        tensors += report.len();
        worst = report.iter().map(|t| t.max_rel_err).fold(worst, f64::max);
    }
    check(
        worst < 1e-4,
        format!(
            "{tensors} tensor checks (T={}, {}x{}, D={}, H={}), max rel err {worst:.2e}",
            cfg.seq_len,
            cfg.image_h,
            cfg.image_w,
            cfg.feature_dim(),
            cfg.lstm_units
        ),
    )
}

fn reversal_softmax() -> Outcome {
    let rev = oracles::recurrent::reversal_identity_sweep(1_000, 31);
    let soft = oracles::recurrent::softmax_sweep(1_000, 32);
    check(rev < 1e-6 && soft < 1e-6, format!("reversal max err {rev:.1e}, softmax max |sum-1| {soft:.1e}"))
}

fn callbacks() -> Outcome {
    let r = oracles::callbacks::sweep(1_000, 77);
    check(
        r.cases == 1_000 && r.mismatches == 0 && r.floor_hits > 0 && r.restorations > 0,
        format!(
            "{} scripts, {} mismatches, {} reached lr floor, {} restored best weights",
            r.cases, r.mismatches, r.floor_hits, r.restorations
        ),
    )
}

fn segment_oracle() -> Outcome {
    let r = oracles::segments::sweep(10_000, 1_000, 8);
    check(
        r.cases == 10_000 && r.mismatches == 0 && r.monotonic_violations == 0,
        format!(
            "{} sequences ({} non-empty), {} mismatches, {} monotonicity violations",
            r.cases, r.nonempty, r.mismatches, r.monotonic_violations
        ),
    )
}

/// Least-squares slope of `ys` against epoch index.
fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = ys.iter().enumerate().map(|(i, y)| (i as f64 - mx) * (y - my)).sum();
    let den: f64 = (0..ys.len()).map(|i| (i as f64 - mx).powi(2)).sum();
    num / den
}

struct Trained {
    model: Model32,
    history: TrainHistory,
}

fn synthetic_training(dir: &Path, slot: &mut Option<Trained>) -> Outcome {
    let spec = SynthSpec { n_per_class: 200, ..SynthSpec::default() };
    let data = dir.join("synthetic");
    generate(&spec, &data).map_err(|e| e.to_string())?;
    let (manifest, _) = build_manifest(&data).map_err(|e| e.to_string())?;
    let m = split_manifest(&manifest, DEFAULT_FRACTIONS, 0).map_err(|e| e.to_string())?;
    let [tr, va, te] = [Split::Train, Split::Val, Split::Test].map(|s| preprocess(&m.split(s)).unwrap());
    let cfg = TrainConfig::default();
    let mut model = Model32::new(ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let history = train(&mut model, &tr, &va, &cfg, |_| {}).map_err(|e| e.to_string())?;
    let eval = evaluate_model(&model, &te).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = history.records.iter().map(|r| r.loss).collect();
    let val_acc: Vec<f64> = history.records.iter().map(|r| r.val_accuracy).collect();
    let (ls, vs) = (slope(&losses), slope(&val_acc));
    let acc = eval.report.accuracy;
    let detail = format!(
        "{} params, split {}/{}/{}, {} epochs (best {}), test ACC {acc:.4}, loss slope {ls:.2e}/epoch, val acc slope {vs:.2e}/epoch, loss {:.3} -> {:.3}",
        count_params(&model.config).total,
        tr.len(),
        va.len(),
        te.len(),
        history.records.len(),
        history.best_epoch,
        losses[0],
        losses[losses.len() - 1],
    );
    *slot = Some(Trained { model, history });
    check(acc >= 0.90 && ls < 0.0 && vs > 0.0, detail)
}

/// Total length of the intersection and union of two sorted disjoint
/// interval lists.
fn overlap(a: &[(f64, f64)], b: &[(f64, f64)]) -> (f64, f64) {
    let inter: f64 = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| (x.1.min(y.1) - x.0.max(y.0)).max(0.0)))
        .sum();
    let total = |v: &[(f64, f64)]| v.iter().map(|(s, e)| e - s).sum::<f64>();
    (inter, total(a) + total(b) - inter)
}

fn end_to_end(dir: &Path, trained: Option<&Trained>) -> Outcome {
    let trained = trained.ok_or("no trained model (synthetic training criterion did not finish)")?;
    let spec = SynthSpec { seed: 99, ..SynthSpec::default() };
    let video = dir.join("composite.y4m");
    let truth = generate_composite(&spec, 20.0, &[(3.0, 7.0), (12.0, 16.0)], &video).map_err(|e| e.to_string())?;
    let meta: VideoMeta = probe_video(&video).map_err(|e| e.to_string())?;
    let params = HighlightParams::default();
    let (_, plan) = plan_video(&trained.model, "acceptance", &meta, &params).map_err(|e| e.to_string())?;
    let found: Vec<(f64, f64)> = plan.segments.iter().map(|s| (s.start_sec, s.end_sec)).collect();
    let (inter, union) = overlap(&found, &truth.violent_intervals);
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    if plan.segments.is_empty() {
        return Err("no segments found".into());
    }
    let report = render_highlight(&plan, &video, &dir.join("highlight.y4m")).map_err(|e| e.to_string())?;
    let planned_frames = plan.total_sec * meta.fps;
    let frame_err = (report.frames as f64 - planned_frames).abs();
    let spans: Vec<String> = found.iter().map(|(s, e)| format!("[{s:.2}, {e:.2}]")).collect();
    check(
        iou >= 0.8 && frame_err <= 4.0,
        format!(
            "segments {} vs truth {:?}, IoU {iou:.3}, rendered {} frames vs plan {planned_frames:.1} (off by {frame_err})",
            spans.join(" "),
            truth.violent_intervals,
            report.frames
        ),
    )
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_clipforge")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("clipforge {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism(dir: &Path) -> Outcome {
    let artifacts = ["data/Violence/fight_0003.y4m", "clips/manifest.jsonl", "clips/train.clpa", "run/model.ckpt", "run/history.json", "run/history.csv"];
    let mut runs = Vec::new();
    let root = dir.join("determinism");
    for _ in 0..2 {
        if root.exists() {
            fs::remove_dir_all(&root).map_err(|e| e.to_string())?;
        }
        let p = |s: &str| root.join(s).to_string_lossy().into_owned();
        cli(&["synth", "--out", &p("data"), "--per-class", "24", "--seed", "17"])?;
        cli(&["preprocess", "--root", &p("data"), "--out", &p("clips"), "--seed", "17"])?;
        cli(&["train", "--data", &p("clips"), "--out", &p("run"), "--seed", "17", "--json"])?;
        let files: Vec<Vec<u8>> = artifacts.iter().map(|f| fs::read(root.join(f)).unwrap()).collect();
        runs.push(files);
    }
    let history = TrainHistory::read_json(&root.join("run/history.json")).map_err(|e| e.to_string())?;
    let differing: Vec<&str> =
        artifacts.iter().zip(runs[0].iter().zip(&runs[1])).filter(|(_, (a, b))| a != b).map(|(n, _)| *n).collect();
    check(
        differing.is_empty() && !history.records.is_empty(),
        format!(
            "two synth→preprocess→train runs in one directory, {} epochs each, {} artifacts compared, differing: {:?}",
            history.records.len(),
            artifacts.len(),
            differing
        ),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut trained = None;
    let mut failures = 0;
    let mut record = |name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let over = limit.is_some_and(|l| elapsed > l);
        let (ok, detail) = match outcome {
            Ok(d) if over => (false, format!("{d}; exceeded {:?} budget", limit.unwrap())),
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if !ok {
            failures += 1;
        }
        println!("{} {name} [{:.2}s] {detail}", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
    };
    let secs = Duration::from_secs;
    record("metric formula suite", Some(secs(5)), &mut metric_formulas);
    record("gradient correctness", Some(secs(60)), &mut gradients);
    record("bilstm reversal and softmax", Some(secs(10)), &mut reversal_softmax);
    record("callback oracles", None, &mut callbacks);
    record("segment merge oracle", None, &mut segment_oracle);
    record("synthetic training", Some(secs(600)), &mut || synthetic_training(dir.path(), &mut trained));
    record("end-to-end highlight", Some(secs(120)), &mut || end_to_end(dir.path(), trained.as_ref()));
    record("cli determinism", None, &mut || determinism(dir.path()));
    if let Some(t) = &trained {
        let r = t.history.records.last().unwrap();
        println!("note: final epoch {} val_acc {:.4} val_loss {:.4} lr {}", r.epoch, r.val_accuracy, r.val_loss, r.lr);
    }
    println!("{} of 8 criteria passed", 8 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
