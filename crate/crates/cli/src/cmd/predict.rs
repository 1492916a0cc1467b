use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use matchlstm::data::{EmbeddingMatrix, LoadMode};
use matchlstm::decode::{predict_examples, predict_examples_ensemble, DecodeConfig, DecodedAnswer, Strategy, DEFAULT_MAX_SPAN};
use matchlstm::eval::write_predictions;
use matchlstm::model::{load_checkpoint, Checkpoint, HeadKind};
use matchlstm::Scalar;
use serde::{Deserialize, Serialize};

use super::{ensure_exists, load_corpus, Precision};
use crate::settings::{required, resolve};
use crate::{Context, Outcome, Usage};

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    /// One checkpoint, or several boundary checkpoints to ensemble.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<PathBuf>,
    /// SQuAD-format questions to answer.
    #[arg(long, env = "MATCHLSTM_INPUT_JSON")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_json: Option<PathBuf>,
    /// Longest span for boundary decoding.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_span: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    /// Official-format predictions file to write.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Embedding file to use instead of the one named in each checkpoint.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSettings {
    pub checkpoints: Vec<PathBuf>,
    pub input_json: Option<PathBuf>,
    pub max_span: Option<usize>,
    pub strategy: Strategy,
    pub out: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub precision: Precision,
}

impl Default for PredictSettings {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            input_json: None,
            max_span: None,
            strategy: Strategy::Search,
            out: PathBuf::from("predictions.json"),
            embeddings: None,
            precision: Precision::F64,
        }
    }
}

/// The embedding file a checkpoint points at, relative to its directory.
pub fn checkpoint_embeddings(ckpt: &Path, named: Option<&str>) -> Option<PathBuf> {
    named.map(|n| ckpt.parent().unwrap_or(Path::new(".")).join(n))
}

pub fn load_member<T: Scalar>(
    path: &Path,
    override_embeddings: Option<&Path>,
) -> anyhow::Result<(Checkpoint<T>, EmbeddingMatrix<T>)> {
    ensure_exists(path, "checkpoint")?;
    let ckpt = load_checkpoint::<T>(path)?;
    let emb_path = match override_embeddings {
        Some(p) => p.to_path_buf(),
        None => checkpoint_embeddings(path, ckpt.header.embeddings.as_deref()).ok_or_else(|| {
            Usage(format!("{} names no embedding file; pass --embeddings", path.display()))
        })?,
    };
    ensure_exists(&emb_path, "embedding file")?;
    let emb = EmbeddingMatrix::<T>::load(&emb_path)?;
    if emb.dim() != ckpt.params.config().embedding_dim {
        return Err(Usage(format!(
            "{} has {}-d vectors but {} expects {}",
            emb_path.display(),
            emb.dim(),
            path.display(),
            ckpt.params.config().embedding_dim
        ))
        .into());
    }
    Ok((ckpt, emb))
}

pub fn run(ctx: &Context, args: &PredictArgs) -> anyhow::Result<Outcome> {
    let s: PredictSettings = resolve("predict", ctx.config.as_ref(), args)?;
    if s.checkpoints.is_empty() {
        return Err(Usage("missing required option --checkpoints".into()).into());
    }
    if s.max_span == Some(0) {
        return Err(Usage("--max-span must be at least 1".into()).into());
    }
    let input = ctx.data_path(required(&s.input_json, "input-json")?);
    match s.precision {
        Precision::F64 => run_typed::<f64>(ctx, &s, &input),
        Precision::F32 => run_typed::<f32>(ctx, &s, &input),
    }
}

fn run_typed<T: Scalar>(ctx: &Context, s: &PredictSettings, input: &Path) -> anyhow::Result<Outcome> {
    let corpus = load_corpus(input, LoadMode::Eval, None)?;
    let override_emb = s.embeddings.as_deref().map(|p| ctx.data_path(p));
    let members = s
        .checkpoints
        .iter()
        .map(|p| load_member::<T>(p, override_emb.as_deref()))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let head = members[0].0.params.config().head;
    if let Some((i, _)) = members
        .iter()
        .enumerate()
        .find(|(_, m)| m.0.params.config().head != head)
    {
        return Err(Usage(format!(
            "{} is a {} model but {} is a {} model",
            s.checkpoints[i].display(),
            members[i].0.params.config().head,
            s.checkpoints[0].display(),
            head
        ))
        .into());
    }

    let max_span = s.max_span.unwrap_or(DEFAULT_MAX_SPAN);
    let answers: Vec<DecodedAnswer> = match (head, members.len()) {
        (HeadKind::Sequence, 1) => {
            if s.max_span.is_some() {
                log::warn!("--max-span does not apply to sequence models; ignored");
            }
            let cfg = DecodeConfig {
                max_span,
                strategy: s.strategy,
            };
            predict_examples(&members[0].0.params, &members[0].1, &corpus.examples, &cfg)?
        }
        (HeadKind::Sequence, _) => {
            return Err(Usage("ensembles need boundary checkpoints".into()).into());
        }
        (HeadKind::Boundary, 1) => {
            let cfg = DecodeConfig {
                max_span,
                strategy: s.strategy,
            };
            predict_examples(&members[0].0.params, &members[0].1, &corpus.examples, &cfg)?
        }
        (HeadKind::Boundary, m) => {
            if s.strategy == Strategy::Greedy {
                log::warn!("ensembles always decode with span search; --strategy greedy ignored");
            }
            log::info!("ensemble of {m} models, max span {max_span}");
            let refs: Vec<_> = members.iter().map(|(c, e)| (&c.params, e)).collect();
            predict_examples_ensemble(&refs, &corpus.examples, max_span)?
        }
    };

    let truncated = answers.iter().filter(|a| a.truncated).count();
    if truncated > 0 {
        log::warn!("{truncated} sequence answers hit the step cap without a stop");
    }
    let predictions: BTreeMap<String, String> = corpus
        .examples
        .iter()
        .zip(answers)
        .map(|(ex, a)| (ex.id.clone(), a.text))
        .collect();
    if let Some(dir) = s.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_predictions(&s.out, &predictions)?;
    log::info!("wrote {} predictions to {}", predictions.len(), s.out.display());
    Ok(Outcome::Ok)
}
