use serde::{Deserialize, Serialize};

use super::NnError;
use crate::dataset::CLASSES_LIST;
use crate::media::{IMAGE_HEIGHT, IMAGE_WIDTH, SEQUENCE_LENGTH};

/// Depthwise-separable frame encoder: a 3×3 stride-2 stem convolution
/// followed by separable blocks (3×3 stride-2 depthwise + 1×1 pointwise),
/// each with ReLU, then global average pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub stem_channels: usize,
    pub block_channels: Vec<usize>,
    /// Number of leading encoder layers (stem = layer 0, block `i` = layer
    /// `i + 1`) whose tensors are frozen. 0 trains everything.
    #[serde(default)]
    pub freeze_boundary: usize,
}

impl EncoderSpec {
    pub fn layer_count(&self) -> usize {
        1 + self.block_channels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.block_channels.last().copied().unwrap_or(self.stem_channels)
    }
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self { stem_channels: 8, block_channels: vec![16, 32, 64], freeze_boundary: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub image_h: usize,
    pub image_w: usize,
    pub encoder: EncoderSpec,
    pub lstm_units: usize,
    pub dense_units: Vec<usize>,
    pub dropout_rate: f64,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: SEQUENCE_LENGTH,
            image_h: IMAGE_HEIGHT,
            image_w: IMAGE_WIDTH,
            encoder: EncoderSpec::default(),
            lstm_units: 32,
            dense_units: vec![64, 32],
            dropout_rate: 0.3,
            num_classes: CLASSES_LIST.len(),
        }
    }
}

impl ModelConfig {
    /// Gradient-check sized model: 2 frames of 8×8, D = 4, H = 3.
    pub fn tiny() -> Self {
        Self {
            seq_len: 2,
            image_h: 8,
            image_w: 8,
            encoder: EncoderSpec { stem_channels: 3, block_channels: vec![4], freeze_boundary: 0 },
            lstm_units: 3,
            dense_units: vec![5, 4],
            dropout_rate: 0.3,
            num_classes: CLASSES_LIST.len(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.feature_dim()
    }

    pub fn frame_len(&self) -> usize {
        self.image_h * self.image_w * 3
    }

    pub fn clip_len(&self) -> usize {
        self.seq_len * self.frame_len()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail("dropout_rate must lie in [0, 1)");
        }
        if self.lstm_units == 0 {
            return fail("lstm_units must be at least 1");
        }
        if self.num_classes != CLASSES_LIST.len() {
            return fail("num_classes must equal the number of class names");
        }
        if self.seq_len == 0 || self.image_h == 0 || self.image_w == 0 {
            return fail("sequence length and frame size must be positive");
        }
        if self.encoder.stem_channels == 0 || self.encoder.block_channels.contains(&0) {
            return fail("encoder channel widths must be positive");
        }
        if self.dense_units.contains(&0) {
            return fail("dense widths must be positive");
        }
        if self.encoder.freeze_boundary > self.encoder.layer_count() {
            return fail("freeze_boundary exceeds the number of encoder layers");
        }
        Ok(())
    }
}
