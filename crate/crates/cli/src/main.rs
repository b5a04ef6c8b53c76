//! `clipforge`: synthetic data, dataset preparation, training, evaluation,
//! highlight extraction and the HTTP service from one binary.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::CliConfig;

#[derive(Debug, Parser)]
#[command(name = "clipforge", version, about = "Fight detection and highlight extraction")]
struct Cli {
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splitting, initialisation, shuffling and synthesis.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages and service jobs.
    #[arg(long, global = true, value_parser = clap::value_parser!(usize))]
    workers: Option<usize>,
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a class-per-folder synthetic dataset.
    Synth(SynthArgs),
    /// Write one long synthetic video with known violent intervals.
    Composite(CompositeArgs),
    /// Scan a dataset folder and write a split manifest.
    Split(SplitArgs),
    /// Sample clips into train/val/test archives.
    Preprocess(PreprocessArgs),
    /// Train a model and write its checkpoint and history.
    Train(TrainArgs),
    /// Confusion matrix and metrics of a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Score sliding windows over a video.
    Score(ScoreArgs),
    /// Score, plan and render a highlight video.
    Highlight(HighlightArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompositeArgs {
    /// Output `.y4m`; ground truth goes next to it as `.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub duration: f64,
    /// Violent interval in seconds as `START:END`; repeatable.
    #[arg(long = "interval", value_parser = parse_interval)]
    pub intervals: Vec<(f64, f64)>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset folder to scan and split.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub root: Option<PathBuf>,
    /// Existing split manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding `train.clpa` and `val.clpa`.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub data: Option<PathBuf>,
    /// Split manifest; clips are sampled in memory.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Archive to evaluate.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub archive: Option<PathBuf>,
    /// Directory of archives; `--split` picks one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Write the evaluation as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training history to export as CSV and JSON curves next to `--out`.
    #[arg(long, requires = "out")]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HighlightFlags {
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub max_gap: Option<f64>,
    #[arg(long)]
    pub min_len: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HighlightArgs {
    #[arg(long, required_unless_present = "plan")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub video: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Render this plan instead of computing one.
    #[arg(long, conflicts_with = "checkpoint")]
    pub plan: Option<PathBuf>,
    /// Stop after writing the plan.
    #[arg(long)]
    pub no_render: bool,
    #[command(flatten)]
    pub params: HighlightFlags,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub storage_dir: Option<PathBuf>,
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:END, got {s}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok((num(a)?, num(b)?))
}

/// Bad flag combinations found after parsing; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Composite(_) => "composite",
        Command::Split(_) => "split",
        Command::Preprocess(_) => "preprocess",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Score(_) => "score",
        Command::Highlight(_) => "highlight",
        Command::Serve(_) => "serve",
    }
}

fn run(cli: Cli) -> anyhow::Result<Value> {
    let cfg = CliConfig::load(cli.config.as_deref())?.resolve(cli.seed, cli.workers);
    if let Some(w) = cfg.workers {
        if w == 0 {
            return Err(UsageError("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    let name = command_name(&cli.command);
    eprintln!("clipforge {name}: effective config {}", serde_json::to_string(&cfg)?);
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&cfg, a),
        Command::Composite(a) => commands::composite(&cfg, a),
        Command::Split(a) => commands::split(&cfg, a),
        Command::Preprocess(a) => commands::preprocess(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a, cli.json),
        Command::Evaluate(a) => commands::evaluate(&cfg, a),
        Command::Score(a) => commands::score(&cfg, a),
        Command::Highlight(a) => commands::highlight(&cfg, a),
        Command::Serve(a) => commands::serve(&cfg, a),
    }?;
    Ok(json!({ "command": name, "config": cfg, "result": result }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(summary) => {
            let mut out = std::io::stdout().lock();
            if json {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            } else if let Some(fields) = summary["result"].as_object() {
                for (k, v) in fields {
                    let _ = match v {
                        Value::String(s) => writeln!(out, "{k}: {s}"),
                        other => writeln!(out, "{k}: {other}"),
                    };
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some();
            eprintln!("error: {e:#}");
            if json {
                println!("{}", json!({ "error": format!("{e:#}") }));
            }
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
