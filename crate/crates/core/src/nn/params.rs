use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelConfig, NnError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InitKind {
    /// Truncated normal with std `sqrt(gain / fan_in)`.
    Weight { fan_in: usize, gain: u32 },
    Zeros,
    /// LSTM bias: zeros with the forget-gate slice set to 1.
    LstmBias { hidden: usize },
}

/// Declared name, shape and initialization of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub encoder_layer: Option<usize>,
    pub(crate) init: InitKind,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn new(name: String, shape: Vec<usize>, encoder_layer: Option<usize>, init: InitKind) -> Self {
        Self { name, shape, encoder_layer, init }
    }
}

/// Tensor order: stem (kernel, bias); per block (dw kernel, dw bias, pw
/// kernel, pw bias); forward LSTM (kernel, recurrent, bias); backward LSTM;
/// per dense layer (kernel, bias); output (kernel, bias).
pub fn param_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let enc = &cfg.encoder;
    let mut specs = Vec::new();
    let c0 = enc.stem_channels;
    specs.push(ParamSpec::new(
        "encoder.stem.kernel".into(),
        vec![3, 3, 3, c0],
        Some(0),
        InitKind::Weight { fan_in: 27, gain: 2 },
    ));
    specs.push(ParamSpec::new("encoder.stem.bias".into(), vec![c0], Some(0), InitKind::Zeros));
    let mut cin = c0;
    for (i, &cout) in enc.block_channels.iter().enumerate() {
        let layer = Some(i + 1);
        let p = format!("encoder.block{i}");
        specs.push(ParamSpec::new(
            format!("{p}.dw_kernel"),
            vec![3, 3, cin],
            layer,
            InitKind::Weight { fan_in: 9, gain: 2 },
        ));
        specs.push(ParamSpec::new(format!("{p}.dw_bias"), vec![cin], layer, InitKind::Zeros));
        specs.push(ParamSpec::new(
            format!("{p}.pw_kernel"),
            vec![cin, cout],
            layer,
            InitKind::Weight { fan_in: cin, gain: 2 },
        ));
        specs.push(ParamSpec::new(format!("{p}.pw_bias"), vec![cout], layer, InitKind::Zeros));
        cin = cout;
    }
    let d = cfg.feature_dim();
    let h = cfg.lstm_units;
    for dir in ["fwd", "bwd"] {
        specs.push(ParamSpec::new(
            format!("lstm.{dir}.kernel"),
            vec![4 * h, d],
            None,
            InitKind::Weight { fan_in: d, gain: 1 },
        ));
        specs.push(ParamSpec::new(
            format!("lstm.{dir}.recurrent"),
            vec![4 * h, h],
            None,
            InitKind::Weight { fan_in: h, gain: 1 },
        ));
        specs.push(ParamSpec::new(format!("lstm.{dir}.bias"), vec![4 * h], None, InitKind::LstmBias { hidden: h }));
    }
    let mut width = 2 * h;
    for (i, &units) in cfg.dense_units.iter().enumerate() {
        specs.push(ParamSpec::new(
            format!("head.dense{i}.kernel"),
            vec![units, width],
            None,
            InitKind::Weight { fan_in: width, gain: 2 },
        ));
        specs.push(ParamSpec::new(format!("head.dense{i}.bias"), vec![units], None, InitKind::Zeros));
        width = units;
    }
    specs.push(ParamSpec::new(
        "head.output.kernel".into(),
        vec![cfg.num_classes, width],
        None,
        InitKind::Weight { fan_in: width, gain: 1 },
    ));
    specs.push(ParamSpec::new("head.output.bias".into(), vec![cfg.num_classes], None, InitKind::Zeros));
    specs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

pub fn count_params(cfg: &ModelConfig) -> ParamCounts {
    let mut counts = ParamCounts { total: 0, trainable: 0, non_trainable: 0 };
    for spec in param_layout(cfg) {
        let n = spec.numel();
        counts.total += n;
        if is_frozen(cfg, &spec) {
            counts.non_trainable += n;
        } else {
            counts.trainable += n;
        }
    }
    counts
}

fn is_frozen(cfg: &ModelConfig, spec: &ParamSpec) -> bool {
    spec.encoder_layer.is_some_and(|l| l < cfg.encoder.freeze_boundary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub trainable: bool,
}

/// Standard deviation of a unit normal truncated to ±2.
const TRUNCATED_NORMAL_STD: f64 = 0.879_625_661_034_239_8;

/// Named parameter tensors in [`param_layout`] order plus the trainable mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    tensors: Vec<ParamTensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = param_layout(cfg)
            .into_iter()
            .map(|spec| {
                let n = spec.numel();
                let data: Vec<T> = match spec.init {
                    InitKind::Zeros => vec![T::zero(); n],
                    InitKind::LstmBias { hidden } => {
                        (0..n).map(|i| if (hidden..2 * hidden).contains(&i) { T::one() } else { T::zero() }).collect()
                    }
                    InitKind::Weight { fan_in, gain } => {
                        // Widened so the ±2σ truncation keeps the target variance.
                        let std = (gain as f64 / fan_in.max(1) as f64).sqrt() / TRUNCATED_NORMAL_STD;
                        let normal = Normal::new(0.0, std).expect("positive std");
                        (0..n)
                            .map(|_| loop {
                                let v: f64 = normal.sample(&mut rng);
                                if v.abs() <= 2.0 * std {
                                    break T::lit(v);
                                }
                            })
                            .collect()
                    }
                };
                ParamTensor { trainable: !is_frozen(cfg, &spec), name: spec.name, shape: spec.shape, data }
            })
            .collect();
        Ok(Self { tensors })
    }

    /// All-zero tensors with the layout and mask of `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let tensors = param_layout(cfg)
            .into_iter()
            .map(|spec| ParamTensor {
                trainable: !is_frozen(cfg, &spec),
                data: vec![T::zero(); spec.numel()],
                name: spec.name,
                shape: spec.shape,
            })
            .collect();
        Self { tensors }
    }

    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<ParamTensor<T>>) -> Result<Self, NnError> {
        let layout = param_layout(cfg);
        for spec in &layout {
            let t = tensors
                .iter()
                .find(|t| t.name == spec.name)
                .ok_or_else(|| NnError::MissingTensor(spec.name.clone()))?;
            if t.shape != spec.shape || t.data.len() != spec.numel() {
                return Err(NnError::ShapeMismatch(format!(
                    "tensor {} has shape {:?}, config expects {:?}",
                    spec.name, t.shape, spec.shape
                )));
            }
        }
        if let Some(extra) = tensors.iter().find(|t| !layout.iter().any(|s| s.name == t.name)) {
            return Err(NnError::UnexpectedTensor(extra.name.clone()));
        }
        let mut tensors = tensors;
        tensors.sort_by_key(|t| layout.iter().position(|s| s.name == t.name));
        Ok(Self { tensors })
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub(crate) fn data(&self, idx: usize) -> &[T] {
        &self.tensors[idx].data
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> bool {
        match self.get_mut(name) {
            Some(t) => {
                t.trainable = trainable;
                true
            }
            None => false,
        }
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
                    trainable: t.trainable,
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
