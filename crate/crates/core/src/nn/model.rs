use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{
    apply_mask, conv_backward_params, conv_forward, dense_backward, dense_forward, depthwise_backward,
    depthwise_forward, dropout_mask, out_dim, pointwise_backward, pointwise_forward, relu_backward, relu_inplace,
    softmax,
};
use super::loss::{one_hot, sample_loss, softmax_xent_grad};
use super::lstm::{run_direction, step_backward, LstmCell, LstmGrads, StepCache};
use super::{ModelConfig, ModelParams, NnError};
use crate::media::ClipTensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout disabled; fully deterministic.
    Eval,
    /// Dropout active. Sample `i` of a batch draws its masks from ChaCha8
    /// stream `i` under `seed`, so results do not depend on scheduling.
    Train { seed: u64 },
}

impl Mode {
    fn sample_rng(self, index: usize) -> Option<ChaCha8Rng> {
        match self {
            Mode::Eval => None,
            Mode::Train { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index as u64);
                Some(rng)
            }
        }
    }
}

/// Tensor indices into [`ModelParams`] for the fixed layout.
#[derive(Debug, Clone)]
struct Layout {
    blocks: usize,
    lstm: [usize; 2],
    dense: Vec<usize>,
    output: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let blocks = cfg.encoder.block_channels.len();
        let lstm_fwd = 2 + 4 * blocks;
        let lstm_bwd = lstm_fwd + 3;
        let dense: Vec<usize> = (0..cfg.dense_units.len()).map(|i| lstm_bwd + 3 + 2 * i).collect();
        let output = lstm_bwd + 3 + 2 * cfg.dense_units.len();
        Self { blocks, lstm: [lstm_fwd, lstm_bwd], dense, output }
    }

    fn block(&self, b: usize) -> usize {
        2 + 4 * b
    }
}

/// Borrowed dense head weights.
#[derive(Debug, Clone)]
pub struct HeadParams<'a, T> {
    /// `(kernel [out][in], bias [out])` per hidden layer.
    pub dense: Vec<(&'a [T], &'a [T])>,
    /// Output layer `W_o [classes][in]`, `b_o [classes]`.
    pub output: (&'a [T], &'a [T]),
}

struct HeadCache<T> {
    /// Input of each dense layer followed by the input of the output layer.
    inputs: Vec<Vec<T>>,
    /// Post-ReLU activations of the hidden layers.
    acts: Vec<Vec<T>>,
    masks: Vec<Option<Vec<T>>>,
    probs: Vec<T>,
}

fn head_forward_cached<T: Scalar, R: Rng>(
    h: &[T],
    head: &HeadParams<'_, T>,
    dropout_rate: f64,
    mut rng: Option<&mut R>,
) -> HeadCache<T> {
    let mut x = h.to_vec();
    let mut inputs = Vec::with_capacity(head.dense.len() + 1);
    let mut acts = Vec::with_capacity(head.dense.len());
    let mut masks = Vec::with_capacity(head.dense.len());
    for &(kernel, bias) in &head.dense {
        let mut a = dense_forward(&x, kernel, bias);
        relu_inplace(&mut a);
        inputs.push(std::mem::take(&mut x));
        let mask = rng.as_deref_mut().map(|r| dropout_mask(a.len(), dropout_rate, r));
        x = a.clone();
        if let Some(m) = &mask {
            apply_mask(&mut x, m);
        }
        acts.push(a);
        masks.push(mask);
    }
    let logits = dense_forward(&x, head.output.0, head.output.1);
    inputs.push(x);
    HeadCache { inputs, acts, masks, probs: softmax(&logits) }
}

/// Dense(ReLU) → dropout → … → output layer → softmax. `rng = None` is eval
/// mode (dropout is the identity).
pub fn head_forward<T: Scalar, R: Rng>(
    h: &[T],
    head: &HeadParams<'_, T>,
    dropout_rate: f64,
    rng: Option<&mut R>,
) -> Result<Vec<T>, NnError> {
    let mut width = h.len();
    for &(kernel, bias) in head.dense.iter().chain(std::iter::once(&head.output)) {
        if kernel.len() != bias.len() * width {
            return Err(NnError::ShapeMismatch(format!(
                "dense layer with {} outputs cannot take {width} inputs",
                bias.len()
            )));
        }
        width = bias.len();
    }
    Ok(head_forward_cached(h, head, dropout_rate, rng).probs)
}

struct FrameCache<T> {
    /// Post-ReLU stem output.
    stem: Vec<T>,
    /// `(h, w)` of the stem output and of each block output.
    dims: Vec<(usize, usize)>,
    /// Post-ReLU depthwise and pointwise outputs per block.
    dw: Vec<Vec<T>>,
    pw: Vec<Vec<T>>,
}

struct SampleCache<T> {
    frames: Vec<FrameCache<T>>,
    feat_mask: Option<Vec<T>>,
    features: Vec<T>,
    fwd: Vec<(usize, StepCache<T>)>,
    bwd: Vec<(usize, StepCache<T>)>,
    head: HeadCache<T>,
}

/// Per-trainable-tensor gradients, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    entries: Vec<(String, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, g)| g.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.entries.iter().map(|(n, g)| (n.as_str(), g.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_entries(entries: Vec<(String, Vec<T>)>) -> Self {
        Self { entries }
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Result of a batched forward + backward pass.
#[derive(Debug, Clone)]
pub struct BatchOutput<T> {
    pub loss: T,
    pub probs: Vec<Vec<T>>,
    pub grads: Gradients<T>,
}

/// Time-distributed CNN encoder → dropout → BiLSTM (clip mode) → dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self, NnError> {
        config.validate()?;
        let params = ModelParams::from_tensors(&config, params.tensors().to_vec())?;
        Ok(Self { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.cast() }
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn lstm_cell(&self, backward_direction: bool) -> LstmCell<'_, T> {
        let idx = self.layout().lstm[backward_direction as usize];
        LstmCell {
            kernel: self.params.data(idx),
            recurrent: self.params.data(idx + 1),
            bias: self.params.data(idx + 2),
            input_size: self.config.feature_dim(),
            hidden: self.config.lstm_units,
        }
    }

    pub fn head_params(&self) -> HeadParams<'_, T> {
        let layout = self.layout();
        HeadParams {
            dense: layout.dense.iter().map(|&i| (self.params.data(i), self.params.data(i + 1))).collect(),
            output: (self.params.data(layout.output), self.params.data(layout.output + 1)),
        }
    }

    fn check_clip(&self, clip: &[T]) -> Result<(), NnError> {
        let want = self.config.clip_len();
        if clip.len() != want {
            return Err(NnError::ShapeMismatch(format!(
                "clip has {} values, model expects {}×{}×{}×3 = {want}",
                clip.len(),
                self.config.seq_len,
                self.config.image_h,
                self.config.image_w
            )));
        }
        Ok(())
    }

    fn frame_forward(&self, frame: &[T]) -> (Vec<T>, FrameCache<T>) {
        let cfg = &self.config;
        let layout = self.layout();
        let (mut h, mut w) = (out_dim(cfg.image_h, 2), out_dim(cfg.image_w, 2));
        let input = rescale_input(frame);
        let mut stem = conv_forward(&input, (cfg.image_h, cfg.image_w, 3), self.params.data(0), self.params.data(1), 2);
        relu_inplace(&mut stem);
        let mut dims = vec![(h, w)];
        let mut dw_out = Vec::with_capacity(layout.blocks);
        let mut pw_out: Vec<Vec<T>> = Vec::with_capacity(layout.blocks);
        let mut cin = cfg.encoder.stem_channels;
        for b in 0..layout.blocks {
            let base = layout.block(b);
            let input = if b == 0 { &stem } else { &pw_out[b - 1] };
            let mut dw = depthwise_forward(input, (h, w, cin), self.params.data(base), self.params.data(base + 1), 2);
            relu_inplace(&mut dw);
            h = out_dim(h, 2);
            w = out_dim(w, 2);
            let mut pw = pointwise_forward(&dw, cin, self.params.data(base + 2), self.params.data(base + 3));
            relu_inplace(&mut pw);
            dims.push((h, w));
            cin = cfg.encoder.block_channels[b];
            dw_out.push(dw);
            pw_out.push(pw);
        }
        let last = pw_out.last().unwrap_or(&stem);
        let npix = T::lit((h * w) as f64);
        let mut feat = vec![T::zero(); cin];
        for px in last.chunks_exact(cin) {
            for (f, &v) in feat.iter_mut().zip(px) {
                *f += v;
            }
        }
        for f in &mut feat {
            *f /= npix;
        }
        (feat, FrameCache { stem, dims, dw: dw_out, pw: pw_out })
    }

    fn frame_backward(&self, frame: &[T], cache: &FrameCache<T>, dfeat: &[T], grads: &mut [Vec<T>]) {
        let cfg = &self.config;
        let layout = self.layout();
        let frozen = cfg.encoder.freeze_boundary;
        let channels = |layer: usize| if layer == 0 { cfg.encoder.stem_channels } else { cfg.encoder.block_channels[layer - 1] };
        let (h, w) = *cache.dims.last().unwrap();
        let npix = T::lit((h * w) as f64);
        let mut d: Vec<T> = Vec::with_capacity(h * w * dfeat.len());
        for _ in 0..h * w {
            d.extend(dfeat.iter().map(|&g| g / npix));
        }
        for b in (0..layout.blocks).rev() {
            let layer = b + 1;
            if layer < frozen {
                return;
            }
            let base = layout.block(b);
            let cin = channels(layer - 1);
            relu_backward(&mut d, &cache.pw[b]);
            let mut d_dw = vec![T::zero(); cache.dw[b].len()];
            {
                let (pk, pb) = pair_mut(grads, base + 2);
                pointwise_backward(&cache.dw[b], cin, self.params.data(base + 2), &d, pk, pb, Some(&mut d_dw));
            }
            relu_backward(&mut d_dw, &cache.dw[b]);
            let input = if b == 0 { &cache.stem } else { &cache.pw[b - 1] };
            let (ih, iw) = cache.dims[b];
            let need_input_grad = layer > frozen;
            let mut d_in = if need_input_grad { vec![T::zero(); input.len()] } else { Vec::new() };
            {
                let (dk, db) = pair_mut(grads, base);
                depthwise_backward(
                    input,
                    (ih, iw, cin),
                    self.params.data(base),
                    &d_dw,
                    2,
                    dk,
                    db,
                    need_input_grad.then_some(d_in.as_mut_slice()),
                );
            }
            if !need_input_grad {
                return;
            }
            d = d_in;
        }
        if frozen > 0 {
            return;
        }
        relu_backward(&mut d, &cache.stem);
        let (dk, db) = pair_mut(grads, 0);
        conv_backward_params(&rescale_input(frame), (cfg.image_h, cfg.image_w, 3), &d, 2, dk, db);
    }

    /// Applies the shared encoder to every frame: `T×H×W×3 → T×D`.
    pub fn encoder_forward(&self, frames: &[T]) -> Result<Vec<T>, NnError> {
        self.check_clip(frames)?;
        let fl = self.config.frame_len();
        Ok(frames.chunks_exact(fl).flat_map(|f| self.frame_forward(f).0).collect())
    }

    fn sample_forward(&self, clip: &[T], mut rng: Option<ChaCha8Rng>) -> SampleCache<T> {
        let fl = self.config.frame_len();
        let mut frames = Vec::with_capacity(self.config.seq_len);
        let mut features = Vec::with_capacity(self.config.seq_len * self.config.feature_dim());
        for f in clip.chunks_exact(fl) {
            let (feat, cache) = self.frame_forward(f);
            features.extend(feat);
            frames.push(cache);
        }
        let rate = self.config.dropout_rate;
        let feat_mask = rng.as_mut().map(|r| dropout_mask(features.len(), rate, r));
        if let Some(m) = &feat_mask {
            apply_mask(&mut features, m);
        }
        let t = self.config.seq_len;
        let fwd = run_direction(&features, 0..t, &self.lstm_cell(false));
        let bwd = run_direction(&features, (0..t).rev(), &self.lstm_cell(true));
        let mut h = fwd[t - 1].1.h.clone();
        h.extend_from_slice(&bwd[t - 1].1.h);
        let head = head_forward_cached(&h, &self.head_params(), rate, rng.as_mut());
        SampleCache { frames, feat_mask, features, fwd, bwd, head }
    }

    fn sample_backward(&self, clip: &[T], cache: &SampleCache<T>, dlogits: &[T]) -> Vec<Vec<T>> {
        let layout = self.layout();
        let mut grads: Vec<Vec<T>> = self.params.tensors().iter().map(|t| vec![T::zero(); t.data.len()]).collect();

        let head = &cache.head;
        let n_dense = layout.dense.len();
        let mut dx = vec![T::zero(); head.inputs[n_dense].len()];
        {
            let (dk, db) = pair_mut(&mut grads, layout.output);
            dense_backward(&head.inputs[n_dense], self.params.data(layout.output), dlogits, dk, db, &mut dx);
        }
        for i in (0..n_dense).rev() {
            let mut da = dx;
            if let Some(m) = &head.masks[i] {
                apply_mask(&mut da, m);
            }
            relu_backward(&mut da, &head.acts[i]);
            dx = vec![T::zero(); head.inputs[i].len()];
            let idx = layout.dense[i];
            let (dk, db) = pair_mut(&mut grads, idx);
            dense_backward(&head.inputs[i], self.params.data(idx), &da, dk, db, &mut dx);
        }

        let hsz = self.config.lstm_units;
        let d = self.config.feature_dim();
        let mut dfeat = vec![T::zero(); cache.features.len()];
        for (dir, steps) in [&cache.fwd, &cache.bwd].into_iter().enumerate() {
            let cell = self.lstm_cell(dir == 1);
            let idx = layout.lstm[dir];
            let (gk, rest) = grads[idx..].split_at_mut(1);
            let (gr, gb) = rest.split_at_mut(1);
            let mut sink = LstmGrads { kernel: &mut gk[0], recurrent: &mut gr[0], bias: &mut gb[0] };
            let mut dh = dx[dir * hsz..(dir + 1) * hsz].to_vec();
            let mut dc = vec![T::zero(); hsz];
            for (t, step) in steps.iter().rev() {
                let x = &cache.features[t * d..][..d];
                let (dhp, dcp) = step_backward(step, x, &dh, &dc, &cell, &mut sink, &mut dfeat[t * d..][..d]);
                dh = dhp;
                dc = dcp;
            }
        }
        if let Some(m) = &cache.feat_mask {
            apply_mask(&mut dfeat, m);
        }

        if self.config.encoder.freeze_boundary < self.config.encoder.layer_count() {
            let fl = self.config.frame_len();
            for (t, (frame, fc)) in clip.chunks_exact(fl).zip(&cache.frames).enumerate() {
                self.frame_backward(frame, fc, &dfeat[t * d..][..d], &mut grads);
            }
        }
        grads
    }

    /// Class probabilities for each clip (`B × num_classes`).
    pub fn forward(&self, batch: &[&[T]], mode: Mode) -> Result<Vec<Vec<T>>, NnError> {
        for clip in batch {
            self.check_clip(clip)?;
        }
        Ok(batch
            .par_iter()
            .enumerate()
            .map(|(i, clip)| self.sample_forward(clip, mode.sample_rng(i)).head.probs)
            .collect())
    }

    pub fn forward_clips(&self, clips: &[ClipTensor], mode: Mode) -> Result<Vec<Vec<T>>, NnError> {
        let converted: Vec<Vec<T>> = clips.iter().map(|c| c.data().iter().map(|&v| T::of_f32(v)).collect()).collect();
        let refs: Vec<&[T]> = converted.iter().map(Vec::as_slice).collect();
        self.forward(&refs, mode)
    }

    /// Per-time-step class probabilities from the sequence-mode BiLSTM
    /// output (eval mode). Diagnostic only; training is clip level.
    pub fn forward_sequence(&self, clip: &[T]) -> Result<Vec<Vec<T>>, NnError> {
        let features = self.encoder_forward(clip)?;
        let seq = super::lstm::bilstm_forward(
            &features,
            &self.lstm_cell(false),
            &self.lstm_cell(true),
            super::lstm::BiMode::Sequence,
        )?;
        let head = self.head_params();
        seq.chunks_exact(2 * self.config.lstm_units)
            .map(|h| head_forward::<T, ChaCha8Rng>(h, &head, 0.0, None))
            .collect()
    }

    /// Mean categorical cross-entropy of the batch and its gradient for every
    /// trainable tensor.
    pub fn backward(&self, batch: &[&[T]], targets: &[usize], mode: Mode) -> Result<BatchOutput<T>, NnError> {
        if batch.is_empty() || batch.len() != targets.len() {
            return Err(NnError::ShapeMismatch(format!("{} clips vs {} labels", batch.len(), targets.len())));
        }
        for clip in batch {
            self.check_clip(clip)?;
        }
        let k = self.config.num_classes;
        if let Some(&bad) = targets.iter().find(|&&c| c >= k) {
            return Err(NnError::ShapeMismatch(format!("label {bad} outside 0..{k}")));
        }
        let scale = T::one() / T::lit(batch.len() as f64);
        let per_sample: Vec<(T, Vec<T>, Vec<Vec<T>>)> = batch
            .par_iter()
            .zip(targets.par_iter())
            .enumerate()
            .map(|(i, (clip, &class))| {
                let cache = self.sample_forward(clip, mode.sample_rng(i));
                let y = one_hot::<T>(class, k);
                let loss = sample_loss(&cache.head.probs, &y);
                let dlogits = softmax_xent_grad(&cache.head.probs, &y, scale);
                let grads = self.sample_backward(clip, &cache, &dlogits);
                (loss, cache.head.probs, grads)
            })
            .collect();

        let mut loss = T::zero();
        let mut probs = Vec::with_capacity(batch.len());
        let mut total: Vec<Vec<T>> = self.params.tensors().iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        for (l, p, g) in per_sample {
            loss += l;
            probs.push(p);
            for (acc, gi) in total.iter_mut().zip(g) {
                for (a, v) in acc.iter_mut().zip(gi) {
                    *a += v;
                }
            }
        }
        let entries = self
            .params
            .tensors()
            .iter()
            .zip(total)
            .filter(|(t, _)| t.trainable)
            .map(|(t, g)| (t.name.clone(), g))
            .collect();
        Ok(BatchOutput { loss: loss * scale, probs, grads: Gradients { entries } })
    }
}

/// Maps pixel values from `[0, 1]` to `[-1, 1]` ahead of the stem.
fn rescale_input<T: Scalar>(frame: &[T]) -> Vec<T> {
    let two = T::lit(2.0);
    frame.iter().map(|&v| two * v - T::one()).collect()
}

fn pair_mut<T>(v: &mut [Vec<T>], i: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = v[i..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}
