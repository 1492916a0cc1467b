//! Adamax and the minibatch training loop.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::data::{batchify, EmbeddingMatrix, TokenizedExample};
use crate::decode::{predict_examples, DecodeConfig, DecodeError};
use crate::eval::{exact_match, token_f1};
use crate::model::{loss_and_gradients, ModelError, ModelParams, Target};
use crate::scalar::lit;
use crate::Scalar;

/// Gradients keyed by parameter name.
pub type GradMap<T> = IndexMap<String, Tensor<T>>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("gradient for {name} has shape {found:?}, parameter is {expected:?}")]
    GradientShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("loss became {loss} at epoch {epoch} (question {id})")]
    NonFiniteLoss { epoch: usize, id: String, loss: f64 },
    #[error("question {id}: {source}")]
    Model {
        id: String,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("metrics log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("epoch callback: {0}")]
    Callback(String),
}

/// Adamax optimiser state: first moment `m`, infinity-norm accumulator `u`
/// and step count `t`.
#[derive(Clone, Debug)]
pub struct Adamax<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    m: IndexMap<String, Tensor<T>>,
    u: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Adamax<T> {
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(lr: f64) -> Self {
        Self {
            lr: lit(lr),
            beta1: lit(0.9),
            beta2: lit(0.999),
            eps: lit(1e-8),
            t: 0,
            m: IndexMap::new(),
            u: IndexMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor<T>> {
        self.m.get(name)
    }

    pub fn infinity_norm(&self, name: &str) -> Option<&Tensor<T>> {
        self.u.get(name)
    }

    /// One update of every tensor in `params`. Tensors without an entry in
    /// `grads` see a zero gradient. Nothing changes if any gradient is
    /// non-finite or mis-shaped.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
        grads: &GradMap<T>,
    ) -> Result<(), TrainError> {
        let params: Vec<(&str, &mut Tensor<T>)> = params.into_iter().collect();
        for (name, theta) in &params {
            if let Some(g) = grads.get(*name) {
                if g.shape() != theta.shape() {
                    return Err(TrainError::GradientShape {
                        name: (*name).to_owned(),
                        expected: theta.shape(),
                        found: g.shape(),
                    });
                }
                if !g.all_finite() {
                    return Err(TrainError::NonFiniteGradient((*name).to_owned()));
                }
            }
        }

        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let step = self.lr / (T::one() - self.beta1.powi(t));
        for (name, theta) in params {
            let (rows, cols) = theta.shape();
            let m = self
                .m
                .entry(name.to_owned())
                .or_insert_with(|| Tensor::zeros(rows, cols));
            let u = self
                .u
                .entry(name.to_owned())
                .or_insert_with(|| Tensor::zeros(rows, cols));
            let g = grads.get(name);
            let (m, u, th) = (m.data_mut(), u.data_mut(), theta.data_mut());
            for i in 0..th.len() {
                let gi = g.map_or(T::zero(), |g| g.data()[i]);
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * gi;
                u[i] = (self.beta2 * u[i]).max(gi.abs());
                th[i] = th[i] - step * m[i] / (u[i] + self.eps);
            }
        }
        Ok(())
    }
}

/// One Adamax step over every model parameter.
pub fn adamax_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &GradMap<T>,
    state: &mut Adamax<T>,
) -> Result<(), TrainError> {
    state.step(params.iter_mut(), grads)
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut GradMap<T>, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .map(|g| g.sum_of_squares().to_f64_lossy())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k: T = lit(max_norm / norm);
        for g in grads.values_mut() {
            g.scale_in_place(k);
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables it.
    pub clip_norm: Option<f64>,
    /// Epochs without a dev F1 improvement before stopping; 0 disables.
    pub patience: usize,
    /// Checkpoint callback runs every this many epochs (and on a new best).
    pub checkpoint_every: usize,
    pub decode: DecodeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 30,
            max_epochs: 10,
            seed: 1,
            clip_norm: None,
            patience: 3,
            checkpoint_every: 1,
            decode: DecodeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if self.decode.max_span == 0 {
            return Err(TrainError::Config("max span must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(TrainError::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-example loss over the epoch.
    pub train_loss: f64,
    pub dev_em: Option<f64>,
    pub dev_f1: Option<f64>,
    pub wall_seconds: f64,
}

/// Appends one JSON object per line.
pub struct MetricsLog {
    file: File,
    path: String,
}

impl MetricsLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let path = path.as_ref();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| TrainError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(Self {
            file,
            path: path.display().to_string(),
        })
    }

    pub fn append(&mut self, m: &EpochMetrics) -> Result<(), TrainError> {
        let line = serde_json::to_string(m).expect("metrics serialize");
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|source| TrainError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// What the epoch callback sees.
pub struct EpochReport<'a, T> {
    pub metrics: &'a EpochMetrics,
    pub params: &'a ModelParams<T>,
    /// This epoch set a new best dev F1 (or, without dev data, is the latest).
    pub is_best: bool,
    /// Cadence from [`TrainConfig::checkpoint_every`] says to checkpoint.
    pub scheduled: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters from the best dev epoch, or the last epoch without dev data.
    pub best: ModelParams<T>,
    pub last: ModelParams<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochMetrics>,
    pub stopped_early: bool,
}

struct Encoded {
    id: String,
    passage: Vec<usize>,
    question: Vec<usize>,
    target: Target,
}

fn encode<T: Scalar>(
    params: &ModelParams<T>,
    emb: &EmbeddingMatrix<T>,
    examples: &[TokenizedExample],
) -> Vec<Encoded> {
    let head = params.config().head;
    examples
        .iter()
        .filter_map(|ex| {
            let span = ex.target_span()?;
            Some(Encoded {
                id: ex.id.clone(),
                passage: emb.ids(ex.passage_tokens()),
                question: emb.ids(ex.question_tokens()),
                target: Target::for_span(head, span, ex.passage.len()),
            })
        })
        .collect()
}

/// Mean loss and mean gradients over one minibatch. Per-example work runs in
/// parallel; the reduction runs in batch order so results do not depend on
/// the thread count.
fn batch_gradients<T: Scalar>(
    params: &ModelParams<T>,
    emb: &EmbeddingMatrix<T>,
    batch: &[&Encoded],
    epoch: usize,
) -> Result<(f64, GradMap<T>), TrainError> {
    let results: Vec<Result<(T, GradMap<T>), TrainError>> = batch
        .par_iter()
        .map(|ex| {
            let (loss, grads) =
                loss_and_gradients(params, emb, &ex.passage, &ex.question, ex.target.clone())
                    .map_err(|source| TrainError::Model {
                        id: ex.id.clone(),
                        source,
                    })?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    id: ex.id.clone(),
                    loss: loss.to_f64_lossy(),
                });
            }
            Ok((loss, grads.into_map()))
        })
        .collect();

    let mut total = 0.0;
    let mut sum: GradMap<T> = IndexMap::new();
    for r in results {
        let (loss, grads) = r?;
        total += loss.to_f64_lossy();
        for (name, g) in grads {
            match sum.get_mut(&name) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    sum.insert(name, g);
                }
            }
        }
    }
    let k: T = lit(1.0 / batch.len() as f64);
    for g in sum.values_mut() {
        g.scale_in_place(k);
    }
    Ok((total, sum))
}

/// EM and F1 (percent) of the model's decoded answers on `examples`.
pub fn dev_scores<T: Scalar>(
    params: &ModelParams<T>,
    emb: &EmbeddingMatrix<T>,
    examples: &[TokenizedExample],
    decode: &DecodeConfig,
) -> Result<(f64, f64), TrainError> {
    if examples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let answers = predict_examples(params, emb, examples, decode)?;
    let (mut em, mut f1) = (0.0, 0.0);
    for (ex, a) in examples.iter().zip(&answers) {
        if ex.gold_texts.is_empty() {
            continue;
        }
        em += exact_match(&a.text, &ex.gold_texts).expect("non-empty golds");
        f1 += token_f1(&a.text, &ex.gold_texts).expect("non-empty golds");
    }
    let n = examples.len() as f64;
    Ok((100.0 * em / n, 100.0 * f1 / n))
}

/// Runs Adamax over shuffled minibatches. The embedding matrix is only read.
/// With dev data, tracks the best dev F1 and stops after `patience` epochs
/// without improvement. The callback can also end training by returning
/// `ControlFlow::Break`.
pub fn train<T: Scalar>(
    initial: ModelParams<T>,
    embeddings: &EmbeddingMatrix<T>,
    train_set: &[TokenizedExample],
    dev_set: &[TokenizedExample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport<'_, T>) -> Result<ControlFlow<()>, TrainError>,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    let encoded = encode(&initial, embeddings, train_set);
    if encoded.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut params = initial;
    let mut opt = Adamax::new(config.learning_rate);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let started = Instant::now();

    for epoch in 1..=config.max_epochs {
        let mut epoch_loss = 0.0;
        for batch in batchify(encoded.len(), config.batch_size, config.seed, epoch as u64) {
            let items: Vec<&Encoded> = batch.iter().map(|&i| &encoded[i]).collect();
            let (loss, mut grads) = batch_gradients(&params, embeddings, &items, epoch)?;
            epoch_loss += loss;
            if let Some(c) = config.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adamax_step(&mut params, &grads, &mut opt)?;
        }

        let (dev_em, dev_f1) = if dev_set.is_empty() {
            (None, None)
        } else {
            let (em, f1) = dev_scores(&params, embeddings, dev_set, &config.decode)?;
            (Some(em), Some(f1))
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: epoch_loss / encoded.len() as f64,
            dev_em,
            dev_f1,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} dev EM {} F1 {}",
            metrics.train_loss,
            dev_em.map_or("-".into(), |v| format!("{v:.2}")),
            dev_f1.map_or("-".into(), |v| format!("{v:.2}")),
        );

        let score = dev_f1.unwrap_or(f64::NEG_INFINITY);
        let is_best = match &best {
            None => true,
            Some(_) if dev_f1.is_none() => true,
            Some((b, _, _)) => score > *b,
        };
        if is_best {
            best = Some((score, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let scheduled = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
        let flow = on_epoch(&EpochReport {
            metrics: &metrics,
            params: &params,
            is_best,
            scheduled,
        })?;
        history.push(metrics);
        if flow.is_break() {
            stopped_early = epoch < config.max_epochs;
            break;
        }

        if dev_f1.is_some() && config.patience > 0 && since_best >= config.patience {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best: best_params,
        last: params,
        best_epoch,
        history,
        stopped_early,
    })
}
