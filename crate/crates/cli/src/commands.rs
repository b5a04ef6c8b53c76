use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clipforge::dataset::{build_manifest, preprocess as sample_clips, read_archive, split_manifest, write_archive};
use clipforge::dataset::{ClipArchive, DatasetManifest, Label, Split};
use clipforge::evaluator::{evaluate_model, export_curves};
use clipforge::highlighter::{import_plan, load_model, plan_video, render_highlight, score_video, HighlightParams};
use clipforge::highlighter::{export_plan, ScoreTrack};
use clipforge::media::probe_video;
use clipforge::nn::{checkpoint_id, save_checkpoint, ModelConfig};
use clipforge::synthetic::{generate, generate_composite};
use clipforge::trainer::{train as fit, TrainHistory};
use clipforge::Model32;
use serde_json::{json, Value};

use crate::config::CliConfig;
use crate::{
    CompositeArgs, EvaluateArgs, HighlightArgs, HighlightFlags, PreprocessArgs, ScoreArgs, ServeArgs, SplitArgs,
    SynthArgs, TrainArgs, UsageError,
};

const SPLITS: [Split; 3] = [Split::Train, Split::Val, Split::Test];

fn archive_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.clpa", split.name()))
}

fn split_counts(m: &DatasetManifest) -> Value {
    let mut out = serde_json::Map::new();
    for s in SPLITS {
        let per: serde_json::Map<String, Value> =
            Label::ALL.iter().map(|&l| (l.name().to_string(), json!(m.count(s, l)))).collect();
        out.insert(s.name().to_string(), Value::Object(per));
    }
    Value::Object(out)
}

pub fn synth(cfg: &CliConfig, a: SynthArgs) -> Result<Value> {
    let mut spec = cfg.synth.clone();
    if let Some(n) = a.per_class {
        spec.n_per_class = n;
    }
    if let Some(d) = a.duration {
        spec.duration_sec = d;
    }
    let clips = generate(&spec, &a.out)?;
    eprintln!("wrote {} clips under {}", clips.len(), a.out.display());
    Ok(json!({ "out": a.out, "clips": clips.len(), "spec": spec }))
}

pub fn composite(cfg: &CliConfig, a: CompositeArgs) -> Result<Value> {
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let truth = generate_composite(&cfg.synth, a.duration, &a.intervals, &a.out)?;
    Ok(json!({ "video": a.out, "truth": a.out.with_extension("json"), "ground_truth": truth }))
}

pub fn split(cfg: &CliConfig, a: SplitArgs) -> Result<Value> {
    let (manifest, skipped) = build_manifest(&a.root)?;
    let m = split_manifest(&manifest, cfg.fractions, cfg.seed)?;
    m.write_jsonl(&a.out)?;
    for p in &skipped.skipped {
        log::warn!("skipped non-video file {}", p.display());
    }
    Ok(json!({ "manifest": a.out, "entries": m.entries.len(), "skipped": skipped.count(), "splits": split_counts(&m) }))
}

fn split_archives(m: &DatasetManifest) -> Result<Vec<(Split, ClipArchive)>> {
    if m.entries.iter().any(|e| e.split.is_none()) {
        bail!("manifest has entries without a split; run `clipforge split` first");
    }
    SPLITS.iter().map(|&s| Ok((s, sample_clips(&m.split(s))?))).collect()
}

pub fn preprocess(cfg: &CliConfig, a: PreprocessArgs) -> Result<Value> {
    fs::create_dir_all(&a.out)?;
    let (manifest, manifest_path) = match (&a.root, &a.manifest) {
        (Some(root), None) => {
            let (m, skipped) = build_manifest(root)?;
            if skipped.count() > 0 {
                log::warn!("skipped {} non-video files", skipped.count());
            }
            let m = split_manifest(&m, cfg.fractions, cfg.seed)?;
            let path = a.out.join("manifest.jsonl");
            m.write_jsonl(&path)?;
            (m, path)
        }
        (None, Some(path)) => (DatasetManifest::read_jsonl(path)?, path.clone()),
        _ => return Err(UsageError("give exactly one of --root or --manifest".into()).into()),
    };
    let mut archives = serde_json::Map::new();
    for (split, archive) in split_archives(&manifest)? {
        let path = archive_path(&a.out, split);
        write_archive(&archive, &path)?;
        archives.insert(split.name().into(), json!({ "path": path, "clips": archive.len() }));
    }
    Ok(json!({ "manifest": manifest_path, "archives": archives, "splits": split_counts(&manifest) }))
}

fn load_train_val(a: &TrainArgs) -> Result<(ClipArchive, ClipArchive)> {
    match (&a.data, &a.manifest) {
        (Some(dir), None) => {
            let load = |s: Split| {
                let p = archive_path(dir, s);
                read_archive(&p).with_context(|| format!("reading {} archive {}", s.name(), p.display()))
            };
            Ok((load(Split::Train)?, load(Split::Val)?))
        }
        (None, Some(path)) => {
            let m = DatasetManifest::read_jsonl(path)?;
            let mut parts = split_archives(&m)?.into_iter().map(|(_, a)| a);
            Ok((parts.next().unwrap(), parts.next().unwrap()))
        }
        _ => Err(UsageError("give exactly one of --data or --manifest".into()).into()),
    }
}

pub fn train(cfg: &CliConfig, a: TrainArgs, quiet: bool) -> Result<Value> {
    let mut tc = cfg.train.clone();
    if let Some(e) = a.epochs {
        tc.max_epochs = e;
    }
    let (train_set, val_set) = load_train_val(&a)?;
    fs::create_dir_all(&a.out)?;
    let mut model = Model32::new(ModelConfig::default(), cfg.seed)?;
    let history = fit(&mut model, &train_set, &val_set, &tc, |r| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}  lr {:.6}",
                r.epoch, r.loss, r.accuracy, r.val_loss, r.val_accuracy, r.lr
            );
        }
    })?;
    let ckpt = a.out.join("model.ckpt");
    save_checkpoint(&model, &ckpt)?;
    let curves = export_curves(&history, &a.out)?;
    fs::write(a.out.join("train_config.json"), serde_json::to_vec_pretty(&tc)?)?;
    Ok(json!({
        "checkpoint": ckpt,
        "checkpoint_id": checkpoint_id(&ckpt)?,
        "history_csv": curves.csv,
        "history_json": curves.json,
        "epochs_run": history.records.len(),
        "best_epoch": history.best_epoch,
        "stopped_early": history.stopped_early,
        "restored_best": history.restored_best,
        "train_clips": train_set.len(),
        "val_clips": val_set.len(),
    }))
}

pub fn evaluate(_cfg: &CliConfig, a: EvaluateArgs) -> Result<Value> {
    let model = load_model::<f32>(&a.checkpoint)?;
    let path = match (&a.archive, &a.data) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join(format!("{}.clpa", a.split)),
        (None, None) => return Err(UsageError("give --archive or --data".into()).into()),
    };
    let set = read_archive(&path).with_context(|| format!("reading archive {}", path.display()))?;
    let eval = evaluate_model(&model, &set).with_context(|| format!("evaluating {}", path.display()))?;
    eprintln!("{}", eval.confusion);
    let mut out = json!({ "archive": path, "evaluation": eval });
    if let Some(p) = &a.out {
        eval.write_json(p)?;
        out["out"] = json!(p);
        if let Some(h) = &a.history {
            let history = TrainHistory::read_json(h)?;
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let curves = export_curves(&history, dir)?;
            out["curves"] = json!({ "csv": curves.csv, "json": curves.json });
        }
    }
    Ok(out)
}

fn merged_params(base: &HighlightParams, f: &HighlightFlags) -> Result<HighlightParams> {
    let p = HighlightParams {
        threshold: f.threshold.unwrap_or(base.threshold),
        stride_frames: f.stride.unwrap_or(base.stride_frames),
        max_gap_sec: f.max_gap.unwrap_or(base.max_gap_sec),
        min_len_sec: f.min_len.unwrap_or(base.min_len_sec),
    };
    p.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(p)
}

pub fn score(cfg: &CliConfig, a: ScoreArgs) -> Result<Value> {
    let stride = a.stride.unwrap_or(cfg.highlight.stride_frames);
    if stride == 0 {
        return Err(UsageError("--stride must be at least 1".into()).into());
    }
    let model = load_model::<f32>(&a.checkpoint)?;
    let meta = probe_video(&a.video)?;
    let scores = score_video(&model, &meta, stride)?;
    let track = ScoreTrack {
        source_id: meta.source_id.clone(),
        checkpoint_id: checkpoint_id(&a.checkpoint)?,
        fps: meta.fps,
        duration_sec: meta.duration_sec,
        stride_frames: stride,
        scores,
    };
    track.write_json(&a.out)?;
    let peak = track.scores.iter().map(|s| s.p_violence).fold(0.0, f64::max);
    Ok(json!({ "scores": a.out, "windows": track.scores.len(), "peak": peak, "source_id": meta.source_id }))
}

pub fn highlight(cfg: &CliConfig, a: HighlightArgs) -> Result<Value> {
    let params = merged_params(&cfg.highlight, &a.params)?;
    fs::create_dir_all(&a.out_dir)?;
    let plan_path = a.out_dir.join("plan.json");
    let mut out = json!({});
    let plan = match (&a.plan, &a.checkpoint) {
        (Some(p), _) => import_plan(p)?,
        (None, Some(ckpt)) => {
            let model = load_model::<f32>(ckpt)?;
            let meta = probe_video(&a.video)?;
            let (track, plan) = plan_video(&model, &checkpoint_id(ckpt)?, &meta, &params)?;
            let scores = a.out_dir.join("scores.json");
            track.write_json(&scores)?;
            out["scores"] = json!(scores);
            plan
        }
        (None, None) => return Err(UsageError("give --checkpoint or --plan".into()).into()),
    };
    export_plan(&plan, &plan_path)?;
    out["plan"] = json!(plan_path);
    out["segments"] = json!(plan.segments);
    out["total_sec"] = json!(plan.total_sec);
    if a.no_render {
        return Ok(out);
    }
    if plan.segments.is_empty() {
        eprintln!("no violent segments found; nothing to render");
        out["video"] = Value::Null;
        return Ok(out);
    }
    let ext = a.video.extension().and_then(|e| e.to_str()).unwrap_or("y4m");
    let video = a.out_dir.join(format!("highlight.{ext}"));
    let report = render_highlight(&plan, &a.video, &video)?;
    out["video"] = json!(video);
    out["render"] = json!(report);
    Ok(out)
}

pub fn serve(cfg: &CliConfig, a: ServeArgs) -> Result<Value> {
    let mut sc = cfg.service.clone();
    sc.apply_env(|k| std::env::var(k).ok())?;
    if let Some(h) = a.host {
        sc.host = h;
    }
    if let Some(p) = a.port {
        sc.port = p;
    }
    if let Some(c) = a.checkpoint {
        sc.checkpoint = c;
    }
    if let Some(s) = a.storage_dir {
        sc.storage_dir = s;
    }
    eprintln!("service config {}", serde_json::to_string(&sc)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(clipforge_service::serve(sc.clone()))?;
    Ok(json!({ "service": sc }))
}
