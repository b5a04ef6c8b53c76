//! Fight detection toolkit: clip sampling, a frame encoder with a
//! bidirectional LSTM classifier, training, evaluation and highlight
//! extraction.

pub mod dataset;
pub mod evaluator;
pub mod highlighter;
pub mod media;
pub mod nn;
pub mod scalar;
pub mod synthetic;
pub mod trainer;

pub use scalar::Scalar;

pub type Model32 = nn::Model<f32>;
pub type Model64 = nn::Model<f64>;
pub type ModelParams32 = nn::ModelParams<f32>;
pub type ModelParams64 = nn::ModelParams<f64>;
