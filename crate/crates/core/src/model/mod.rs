//! The match-LSTM reader: preprocessing LSTM, bidirectional match-LSTM and
//! the sequence / boundary answer pointers, expressed over [`crate::autodiff`].

mod check;
mod checkpoint;
mod config;
pub mod network;
pub mod ops;
mod params;

use thiserror::Error;

use crate::autodiff::{Gradients, GraphError, Tensor};
use crate::data::EmbeddingMatrix;
use crate::Scalar;

pub use check::{model_gradcheck, GradCheckSetup};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, TensorShape};
pub use config::{HeadKind, ModelConfig};
pub use network::{build_model_graph, sequence_target, HeadNodes, ModelGraph, Target, Unroll};
pub use params::{param_specs, Init, ModelParams, ParamSpec, EMBEDDINGS};

/// Inference cap on emitted positions for the sequence head.
pub const SEQUENCE_CAP: usize = 30;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("passage has no tokens")]
    EmptyPassage,
    #[error("question has no tokens")]
    EmptyQuestion,
    #[error("gold index {index} outside {width} positions")]
    GoldOutOfRange { index: usize, width: usize },
    #[error("bad target: {0}")]
    Target(String),
    #[error("bad model config: {0}")]
    Config(String),
    #[error("embedding dimension {found} does not match the model's {expected}")]
    EmbeddingDim { expected: usize, found: usize },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Output distributions of either head.
#[derive(Clone, Debug, PartialEq)]
pub enum PointerDistributions<T> {
    /// One row of width `P + 1` per unrolled step; index `P` is stop.
    Sequence(Vec<Vec<T>>),
    Boundary { start: Vec<T>, end: Vec<T> },
}

/// Distributions plus the match-layer attention for one example.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub distributions: PointerDistributions<T>,
    /// `P x Q`, row `i` is the forward attention at passage position `i`.
    pub alpha_fwd: Tensor<T>,
    /// `P x Q`, reverse direction.
    pub alpha_rev: Tensor<T>,
}

fn check_dims<T: Scalar>(params: &ModelParams<T>, emb: &EmbeddingMatrix<T>) -> Result<(), ModelError> {
    let expected = params.config().embedding_dim;
    if emb.dim() != expected {
        return Err(ModelError::EmbeddingDim {
            expected,
            found: emb.dim(),
        });
    }
    Ok(())
}

fn stack_rows<T: Scalar>(g: &crate::autodiff::Graph<T>, rows: &[crate::autodiff::NodeId]) -> Tensor<T> {
    let rows: Vec<Vec<T>> = rows
        .iter()
        .map(|&r| g.value(r).expect("evaluated").data().to_vec())
        .collect();
    Tensor::from_rows(&rows)
}

/// Runs the model forward without a loss.
pub fn predict<T: Scalar>(
    params: &ModelParams<T>,
    embeddings: &EmbeddingMatrix<T>,
    passage_ids: &[usize],
    question_ids: &[usize],
    sequence_steps: usize,
) -> Result<Prediction<T>, ModelError> {
    check_dims(params, embeddings)?;
    let mut mg = build_model_graph::<T>(
        params.config(),
        passage_ids,
        question_ids,
        Unroll::Infer { sequence_steps },
    )?;
    mg.graph.forward(&params.bindings(embeddings))?;
    let g = &mg.graph;
    let row = |id| g.value(id).expect("evaluated").data().to_vec();
    let distributions = match &mg.head {
        HeadNodes::Sequence(betas) => {
            PointerDistributions::Sequence(betas.iter().map(|&b| row(b)).collect())
        }
        HeadNodes::Boundary { start, end } => PointerDistributions::Boundary {
            start: row(*start),
            end: row(*end),
        },
    };
    Ok(Prediction {
        distributions,
        alpha_fwd: stack_rows(g, &mg.alpha_fwd),
        alpha_rev: stack_rows(g, &mg.alpha_rev),
    })
}

/// Forward and backward for one training example.
pub fn loss_and_gradients<T: Scalar>(
    params: &ModelParams<T>,
    embeddings: &EmbeddingMatrix<T>,
    passage_ids: &[usize],
    question_ids: &[usize],
    target: Target,
) -> Result<(T, Gradients<T>), ModelError> {
    check_dims(params, embeddings)?;
    let mut mg = build_model_graph::<T>(
        params.config(),
        passage_ids,
        question_ids,
        Unroll::Train(target),
    )?;
    mg.graph.forward(&params.bindings(embeddings))?;
    let loss = mg.loss.expect("training graph has a loss");
    let value = mg.graph.scalar(loss).expect("scalar loss");
    let grads = mg.graph.backward(loss)?;
    Ok((value, grads))
}

/// Loss only.
pub fn example_loss<T: Scalar>(
    params: &ModelParams<T>,
    embeddings: &EmbeddingMatrix<T>,
    passage_ids: &[usize],
    question_ids: &[usize],
    target: Target,
) -> Result<T, ModelError> {
    check_dims(params, embeddings)?;
    let mut mg = build_model_graph::<T>(
        params.config(),
        passage_ids,
        question_ids,
        Unroll::Train(target),
    )?;
    mg.graph.forward(&params.bindings(embeddings))?;
    Ok(mg.graph.scalar(mg.loss.expect("loss")).expect("scalar loss"))
}
