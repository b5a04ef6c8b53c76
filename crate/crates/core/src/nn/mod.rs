//! The clip classifier: a depthwise-separable CNN applied to every frame,
//! dropout, a bidirectional LSTM over the frame features and a dense softmax
//! head. Forward and backward passes are written out by hand and are generic
//! over [`Scalar`](crate::Scalar).

mod checkpoint;
mod config;
mod layers;
mod loss;
mod lstm;
mod model;
mod params;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{
    checkpoint_id, decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{EncoderSpec, ModelConfig};
pub use layers::{dropout_mask, softmax};
pub use loss::{categorical_crossentropy, one_hot, PROB_EPSILON};
pub use lstm::{bilstm_forward, lstm_cell_step, lstm_forward_sequence, BiMode, LstmCell, LstmCellParams};
pub use model::{head_forward, BatchOutput, Gradients, HeadParams, Mode, Model};
pub use params::{count_params, param_layout, ModelParams, ParamCounts, ParamSpec, ParamTensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint has unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint not found: {}", .0.display())]
    CheckpointMissing(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
