//! Match-LSTM reader with Answer-Pointer heads for extractive question
//! answering.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: tensors and a reverse-mode tape.
//! * [`data`]: SQuAD-format loading, tokenization, span alignment, GloVe.
//! * [`model`]: preprocessing LSTM, bidirectional match-LSTM, sequence and
//!   boundary pointer heads, checkpoints.
//! * [`train`]: Adamax and the minibatch loop.
//! * [`decode`]: greedy, length-limited search and ensemble span decoding.
//! * [`eval`]: exact match and token F1 with breakdown tables.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the common instantiations.

pub mod autodiff;
pub mod data;
pub mod decode;
pub mod eval;
pub mod model;
mod container;
mod scalar;
pub mod synthetic;
pub mod train;

pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type EmbeddingMatrix64 = data::EmbeddingMatrix<f64>;
pub type EmbeddingMatrix32 = data::EmbeddingMatrix<f32>;
