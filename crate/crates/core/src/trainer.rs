//! Minibatch SGD with plateau learning-rate decay and early stopping.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ClipArchive;
use crate::nn::{categorical_crossentropy, one_hot, Gradients, Mode, Model, ModelParams, NnError};
use crate::scalar::Scalar;

/// Minimum decrease of `val_loss` that counts as an improvement.
pub const PLATEAU_MIN_DELTA: f64 = 1e-4;
/// Minimum increase of `val_accuracy` that counts as an improvement.
pub const EARLYSTOP_MIN_DELTA: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("loss became {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub earlystop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            batch_size: 8,
            initial_lr: 0.01,
            plateau_factor: 0.6,
            plateau_patience: 5,
            min_lr: 0.00005,
            earlystop_patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!("plateau_factor {} not in (0, 1)", self.plateau_factor));
        }
        if !(self.min_lr > 0.0) || !(self.initial_lr >= self.min_lr) {
            return bad(format!("need 0 < min_lr ≤ initial_lr, got {} and {}", self.min_lr, self.initial_lr));
        }
        if self.plateau_patience == 0 || self.earlystop_patience == 0 {
            return bad("patience values must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used for this epoch's updates.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub restored_best: bool,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<EpochRecord>, TrainError> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<Result<_, _>>()?)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), TrainError> {
        let json = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, TrainError> {
        serde_json::from_slice(&fs::read(path)?).map_err(|e| TrainError::Io(std::io::Error::other(e)))
    }
}

/// `p ← p − lr·g` for every trainable tensor. `grads` must name exactly the
/// trainable tensors.
pub fn sgd_update<T: Scalar>(params: &mut ModelParams<T>, grads: &Gradients<T>, lr: f64) -> Result<(), NnError> {
    let trainable: Vec<&str> = params.tensors().iter().filter(|t| t.trainable).map(|t| t.name.as_str()).collect();
    let named: Vec<&str> = grads.names().collect();
    if trainable != named {
        return Err(NnError::ShapeMismatch(format!(
            "gradients cover {named:?}, trainable tensors are {trainable:?}"
        )));
    }
    for (name, g) in grads.iter() {
        let t = params.get(name).expect("checked above");
        if t.data.len() != g.len() {
            return Err(NnError::ShapeMismatch(format!("{name}: {} values vs {} gradients", t.data.len(), g.len())));
        }
    }
    let lr = T::lit(lr);
    for (name, g) in grads.iter() {
        let t = params.get_mut(name).expect("checked above");
        for (w, &d) in t.data.iter_mut().zip(g) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// Reduce-on-plateau over validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub lr: f64,
    pub best: f64,
    pub wait: usize,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl PlateauState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.initial_lr,
            best: f64::INFINITY,
            wait: 0,
            factor: cfg.plateau_factor,
            patience: cfg.plateau_patience,
            min_lr: cfg.min_lr,
        }
    }
}

/// Feeds one epoch's validation loss; returns the lr for the next epoch.
pub fn plateau_step(state: &mut PlateauState, val_loss: f64) -> f64 {
    if val_loss < state.best - PLATEAU_MIN_DELTA {
        state.best = val_loss;
        state.wait = 0;
    } else {
        state.wait += 1;
        if state.wait >= state.patience {
            state.lr = (state.lr * state.factor).max(state.min_lr);
            state.wait = 0;
        }
    }
    state.lr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Early stopping over validation accuracy, keeping the best weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopState<T> {
    pub best: f64,
    pub best_epoch: usize,
    pub wait: usize,
    pub patience: usize,
    pub snapshot: Option<ModelParams<T>>,
}

impl<T: Scalar> EarlyStopState<T> {
    pub fn new(patience: usize) -> Self {
        Self { best: f64::NEG_INFINITY, best_epoch: 0, wait: 0, patience, snapshot: None }
    }
}

pub fn earlystop_step<T: Scalar>(
    state: &mut EarlyStopState<T>,
    epoch: usize,
    val_accuracy: f64,
    params: &ModelParams<T>,
) -> StopDecision {
    if val_accuracy > state.best + EARLYSTOP_MIN_DELTA {
        state.best = val_accuracy;
        state.best_epoch = epoch;
        state.wait = 0;
        state.snapshot = Some(params.clone());
        return StopDecision::Continue;
    }
    state.wait += 1;
    if state.wait >= state.patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

/// Plateau and early-stop state, advanced once per epoch.
#[derive(Debug, Clone)]
pub struct Callbacks<T> {
    pub plateau: PlateauState,
    pub stopper: EarlyStopState<T>,
}

impl<T: Scalar> Callbacks<T> {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self { plateau: PlateauState::new(cfg), stopper: EarlyStopState::new(cfg.earlystop_patience) }
    }

    /// Learning rate for the coming epoch.
    pub fn lr(&self) -> f64 {
        self.plateau.lr
    }

    pub fn end_epoch(&mut self, epoch: usize, val_loss: f64, val_accuracy: f64, params: &ModelParams<T>) -> StopDecision {
        plateau_step(&mut self.plateau, val_loss);
        earlystop_step(&mut self.stopper, epoch, val_accuracy, params)
    }

    /// Swaps the best snapshot into `params`; returns `(best_epoch, restored)`.
    pub fn restore_best(&mut self, params: &mut ModelParams<T>) -> (usize, bool) {
        match self.stopper.snapshot.take() {
            Some(best) => {
                *params = best;
                (self.stopper.best_epoch, true)
            }
            None => (self.stopper.best_epoch, false),
        }
    }
}

/// Mean loss and accuracy over a whole set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetMetrics {
    pub loss: f64,
    pub accuracy: f64,
}

fn to_scalar<T: Scalar>(clip: &[f32]) -> Vec<T> {
    clip.iter().map(|&v| T::of_f32(v)).collect()
}

/// Index of the largest probability; ties go to the lower index.
pub fn argmax<T: Scalar>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode probabilities for every clip of `set`, in chunks of `chunk`.
pub fn predict<T: Scalar>(model: &Model<T>, set: &ClipArchive, chunk: usize) -> Result<Vec<Vec<T>>, NnError> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let clips: Vec<Vec<T>> = part.iter().map(|&i| to_scalar(set.clip(i))).collect();
        let refs: Vec<&[T]> = clips.iter().map(Vec::as_slice).collect();
        out.extend(model.forward(&refs, Mode::Eval)?);
    }
    Ok(out)
}

pub fn evaluate_set<T: Scalar>(model: &Model<T>, set: &ClipArchive, chunk: usize) -> Result<SetMetrics, NnError> {
    let probs = predict(model, set, chunk)?;
    let k = model.config.num_classes;
    let y: Vec<Vec<T>> = set.labels.iter().map(|l| one_hot(l.index(), k)).collect();
    let loss = categorical_crossentropy(&probs, &y)?.as_f64();
    let correct = probs.iter().zip(&set.labels).filter(|(p, l)| argmax(p) == l.index()).count();
    Ok(SetMetrics { loss, accuracy: correct as f64 / set.len() as f64 })
}

fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    let tag = ((epoch as u64) << 32) | batch as u64;
    seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains `model` in place. On return the model holds the best-validation
/// weights.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train_set: &ClipArchive,
    val_set: &ClipArchive,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("val"));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut callbacks = Callbacks::<T>::new(cfg);
    let mut history = TrainHistory::default();
    let n = train_set.len();

    for epoch in 1..=cfg.max_epochs {
        let lr = callbacks.lr();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let clips: Vec<Vec<T>> = idx.iter().map(|&i| to_scalar(train_set.clip(i))).collect();
            let refs: Vec<&[T]> = clips.iter().map(Vec::as_slice).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| train_set.labels[i].index()).collect();
            let out = model.backward(&refs, &targets, Mode::Train { seed: dropout_seed(cfg.seed, epoch, b) })?;
            let loss = out.loss.as_f64();
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b, value: loss });
            }
            loss_sum += loss * idx.len() as f64;
            correct += out.probs.iter().zip(&targets).filter(|(p, &t)| argmax(p) == t).count();
            sgd_update(&mut model.params, &out.grads, lr)?;
        }
        let val = evaluate_set(model, val_set, 32)?;
        if !val.loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: usize::MAX, value: val.loss });
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            lr,
        };
        on_epoch(&record);
        history.records.push(record);
        if callbacks.end_epoch(epoch, val.loss, val.accuracy, &model.params) == StopDecision::Stop {
            history.stopped_early = true;
            break;
        }
    }
    (history.best_epoch, history.restored_best) = callbacks.restore_best(&mut model.params);
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    #[test]
    fn sgd_examples() {
        let cfg = ModelConfig::tiny();
        let mut p = ModelParams::<f64>::init(&cfg, 1).unwrap();
        p.get_mut("head.output.bias").unwrap().data[0] = 2.0;
        let entries: Vec<(String, Vec<f64>)> = p
            .tensors()
            .iter()
            .map(|t| (t.name.clone(), vec![if t.name == "head.output.bias" { 0.5 } else { 1.0 }; t.data.len()]))
            .collect();
        let grads = Gradients::from_entries(entries);
        let before = p.clone();
        sgd_update(&mut p, &grads, 0.0).unwrap();
        assert_eq!(p, before);
        sgd_update(&mut p, &grads, 0.1).unwrap();
        assert!((p.get("head.output.bias").unwrap().data[0] - 1.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_frozen_or_missing() {
        let mut cfg = ModelConfig::tiny();
        cfg.encoder.freeze_boundary = 1;
        let mut p = ModelParams::<f64>::init(&cfg, 1).unwrap();
        let all: Vec<(String, Vec<f64>)> =
            p.tensors().iter().map(|t| (t.name.clone(), vec![1.0; t.data.len()])).collect();
        assert!(sgd_update(&mut p, &Gradients::from_entries(all.clone()), 0.1).is_err());
        assert!(sgd_update(&mut p, &Gradients::from_entries(all[3..].to_vec()), 0.1).is_err());
    }

    #[test]
    fn plateau_worked_example() {
        let mut s = PlateauState::new(&TrainConfig::default());
        let mut lrs = Vec::new();
        for _ in 0..10 {
            lrs.push(s.lr);
            plateau_step(&mut s, 1.0);
        }
        assert_eq!(&lrs[..6], &[0.01; 6]);
        assert!((lrs[6] - 0.006).abs() < 1e-15);
    }

    #[test]
    fn plateau_floor() {
        let mut s = PlateauState::new(&TrainConfig::default());
        for _ in 0..200 {
            plateau_step(&mut s, 1.0);
        }
        assert_eq!(s.lr, 0.00005);
    }

    #[test]
    fn earlystop_worked_example() {
        let p = ModelParams::<f32>::zeros(&ModelConfig::tiny());
        let mut s = EarlyStopState::new(10);
        let mut stopped_at = None;
        for epoch in 1..=30 {
            if earlystop_step(&mut s, epoch, 0.9, &p) == StopDecision::Stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(11));
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { plateau_factor: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { max_epochs: 0, ..Default::default() }.validate().is_err());
    }
}
