//! Confusion matrix, the five classification metrics, and report exports.
//!
//! Violence (class index 1) is the positive class. Ratios whose denominator
//! is zero evaluate to 0.0 and raise the matching flag in [`Undefined`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClipArchive, CLASSES_LIST};
use crate::nn::{categorical_crossentropy, one_hot, Model, NnError};
use crate::scalar::Scalar;
use crate::trainer::{argmax, predict, TrainError, TrainHistory};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predicted} predictions for {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("label {0} is not a class index")]
    BadLabel(usize),
    #[error("confusion matrix has no samples")]
    EmptyMatrix,
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("training history has no records")]
    EmptyHistory,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self { tp: self.tp * k, fp: self.fp * k, tn: self.tn * k, fn_: self.fn_ * k }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [neg, pos] = CLASSES_LIST;
        writeln!(f, "{:>20} {:>12} {:>12}", "actual \\ predicted", neg, pos)?;
        writeln!(f, "{:>20} {:>12} {:>12}", neg, self.tn, self.fp)?;
        write!(f, "{:>20} {:>12} {:>12}", pos, self.fn_, self.tp)
    }
}

pub fn confusion(predicted: &[usize], truth: &[usize]) -> Result<ConfusionMatrix, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch { predicted: predicted.len(), truth: truth.len() });
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            _ => return Err(EvalError::BadLabel(p.max(t))),
        }
    }
    Ok(cm)
}

/// Which ratios had a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Undefined {
    pub sensitivity: bool,
    pub specificity: bool,
    pub precision: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub f1: f64,
    /// Mean cross-entropy, when the report came from model outputs.
    pub loss: Option<f64>,
    pub undefined: Undefined,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let (sensitivity, se_undef) = ratio(cm.tp, cm.tp + cm.fn_);
    let (specificity, sp_undef) = ratio(cm.tn, cm.tn + cm.fp);
    let (precision, pe_undef) = ratio(cm.tp, cm.tp + cm.fp);
    let accuracy = (cm.tn + cm.tp) as f64 / cm.total() as f64;
    let f1_undef = precision + sensitivity == 0.0;
    let f1 = if f1_undef { 0.0 } else { 2.0 * (precision * sensitivity) / (precision + sensitivity) };
    Ok(MetricsReport {
        sensitivity,
        specificity,
        accuracy,
        precision,
        f1,
        loss: None,
        undefined: Undefined { sensitivity: se_undef, specificity: sp_undef, precision: pe_undef, f1: f1_undef },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
    pub samples: usize,
}

impl Evaluation {
    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, EvalError> {
        serde_json::from_slice(&fs::read(path)?).map_err(|e| EvalError::Io(std::io::Error::other(e)))
    }
}

/// Eval-mode predictions over `set`, argmax decisions, and the report with
/// mean cross-entropy.
pub fn evaluate_model<T: Scalar>(model: &Model<T>, set: &ClipArchive) -> Result<Evaluation, EvalError> {
    if set.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let probs = predict(model, set, 32)?;
    let truth: Vec<usize> = set.labels.iter().map(|l| l.index()).collect();
    let predicted: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let targets: Vec<Vec<T>> = truth.iter().map(|&t| one_hot(t, model.config.num_classes)).collect();
    let confusion = confusion(&predicted, &truth)?;
    let mut report = metrics(&confusion)?;
    report.loss = Some(categorical_crossentropy(&probs, &targets)?.as_f64());
    Ok(Evaluation { confusion, report, samples: set.len() })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Writes `history.csv` (epoch, loss, accuracy, val_loss, val_accuracy, lr)
/// and `history.json` into `out_dir`.
pub fn export_curves(history: &TrainHistory, out_dir: &Path) -> Result<CurveFiles, EvalError> {
    if history.records.is_empty() {
        return Err(EvalError::EmptyHistory);
    }
    fs::create_dir_all(out_dir)?;
    let files = CurveFiles { csv: out_dir.join("history.csv"), json: out_dir.join("history.json") };
    history.write_csv(&files.csv)?;
    history.write_json(&files.json)?;
    Ok(files)
}
