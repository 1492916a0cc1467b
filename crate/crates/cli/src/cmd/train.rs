use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Args;
use matchlstm::data::{build_vocabulary, load_glove, LoadMode};
use matchlstm::decode::{DecodeConfig, Strategy};
use matchlstm::model::{save_checkpoint, HeadKind, ModelConfig, ModelParams};
use matchlstm::train::{train, MetricsLog, TrainConfig, TrainError};
use matchlstm::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ensure_exists, load_corpus, Precision};
use crate::manifest::RunManifest;
use crate::settings::{required, resolve};
use crate::{Context, Outcome, Usage};

pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// SQuAD v1.1 training file.
    #[arg(long, env = "MATCHLSTM_TRAIN_JSON")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_json: Option<PathBuf>,
    /// SQuAD v1.1 development file for model selection.
    #[arg(long, env = "MATCHLSTM_DEV_JSON")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_json: Option<PathBuf>,
    /// GloVe text vectors.
    #[arg(long, env = "MATCHLSTM_GLOVE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glove: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadKind>,
    /// Bidirectional preprocessing LSTM.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub bi_preprocess: bool,
    /// Second boundary head that predicts the end first.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub bi_ans_ptr: bool,
    /// Separate preprocessing LSTMs for passage and question.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub unshared_preprocess: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Global gradient-norm clip.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    /// Epochs without dev F1 improvement before stopping (0 disables).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    /// Longest span considered when decoding the dev set.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_span: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
    /// Directory for tokenized-corpus caches.
    #[arg(long, env = "MATCHLSTM_CACHE_DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub train_json: Option<PathBuf>,
    pub dev_json: Option<PathBuf>,
    pub glove: Option<PathBuf>,
    pub hidden_dim: usize,
    pub head: HeadKind,
    pub bi_preprocess: bool,
    pub bi_ans_ptr: bool,
    pub unshared_preprocess: bool,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub clip_norm: Option<f64>,
    pub patience: usize,
    pub checkpoint_every: usize,
    pub max_span: usize,
    pub strategy: Strategy,
    pub precision: Precision,
    pub cache_dir: Option<PathBuf>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            train_json: None,
            dev_json: None,
            glove: None,
            hidden_dim: 150,
            head: HeadKind::Boundary,
            bi_preprocess: false,
            bi_ans_ptr: false,
            unshared_preprocess: false,
            batch_size: 30,
            lr: 0.002,
            epochs: 10,
            seed: 1,
            out_dir: PathBuf::from("run"),
            clip_norm: None,
            patience: 3,
            checkpoint_every: 1,
            max_span: 15,
            strategy: Strategy::Search,
            precision: Precision::F64,
            cache_dir: None,
        }
    }
}

impl TrainSettings {
    pub fn model_config(&self, embedding_dim: usize) -> ModelConfig {
        let mut c = ModelConfig::new(self.hidden_dim, embedding_dim, self.head);
        c.bi_preprocess = self.bi_preprocess;
        c.bi_answer_pointer = self.bi_ans_ptr;
        c.shared_preprocess = !self.unshared_preprocess;
        c
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            seed: self.seed,
            clip_norm: self.clip_norm,
            patience: self.patience,
            checkpoint_every: self.checkpoint_every,
            decode: DecodeConfig {
                max_span: self.max_span,
                strategy: self.strategy,
            },
        }
    }
}

pub fn resolve_settings(ctx: &Context, args: &TrainArgs) -> Result<TrainSettings, Usage> {
    let s: TrainSettings = resolve("train", ctx.config.as_ref(), args)?;
    if s.hidden_dim == 0 {
        return Err(Usage("--hidden-dim must be at least 1".into()));
    }
    if s.bi_ans_ptr && s.head != HeadKind::Boundary {
        return Err(Usage("--bi-ans-ptr needs --head boundary".into()));
    }
    s.train_config()
        .validate()
        .map_err(|e| Usage(e.to_string()))?;
    Ok(s)
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:03}.ckpt")
}

pub fn run(ctx: &Context, args: &TrainArgs) -> anyhow::Result<Outcome> {
    let s = resolve_settings(ctx, args)?;
    let train_json = ctx.data_path(required(&s.train_json, "train-json")?);
    let glove = ctx.data_path(required(&s.glove, "glove")?);
    let dev_json = s.dev_json.as_deref().map(|p| ctx.data_path(p));
    ensure_exists(&train_json, "training file")?;
    ensure_exists(&glove, "GloVe file")?;
    if let Some(d) = &dev_json {
        ensure_exists(d, "dev file")?;
    }
    log::info!("seed {}", s.seed);

    std::fs::create_dir_all(&s.out_dir)
        .with_context(|| format!("creating {}", s.out_dir.display()))?;
    let mut manifest = RunManifest::begin("train", &s, s.seed);
    manifest.write(&s.out_dir)?;

    match s.precision {
        Precision::F64 => run_typed::<f64>(&s, &train_json, dev_json.as_deref(), &glove, &mut manifest)?,
        Precision::F32 => run_typed::<f32>(&s, &train_json, dev_json.as_deref(), &glove, &mut manifest)?,
    }
    manifest.finish(&s.out_dir)?;
    Ok(Outcome::Ok)
}

fn run_typed<T: Scalar>(
    s: &TrainSettings,
    train_json: &Path,
    dev_json: Option<&Path>,
    glove: &Path,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    let out = &s.out_dir;
    let cache = s.cache_dir.as_deref();
    let train_set = load_corpus(train_json, LoadMode::Train, cache)?;
    let dev_set = dev_json
        .map(|d| load_corpus(d, LoadMode::Eval, cache))
        .transpose()?;
    let dev_examples = dev_set.as_ref().map_or(&[][..], |d| &d.examples[..]);

    let vocab = build_vocabulary([&train_set.examples[..], dev_examples]);
    let embeddings = load_glove::<T>(glove, &vocab).with_context(|| format!("loading {}", glove.display()))?;
    log::info!(
        "vocabulary {} tokens, {} with vectors, dim {}",
        vocab.len(),
        embeddings.found,
        embeddings.dim()
    );
    embeddings.save(out.join(EMBEDDINGS_FILE))?;
    manifest.artifacts.push(EMBEDDINGS_FILE.into());

    let cfg = s.model_config(embeddings.dim());
    let params = ModelParams::<T>::init(&cfg, &mut ChaCha8Rng::seed_from_u64(s.seed));
    log::info!("{} parameters", params.num_scalars());

    let mut metrics = MetricsLog::open(out.join(METRICS_FILE))?;
    manifest.artifacts.push(METRICS_FILE.into());
    manifest.write(out)?;

    let mut written = Vec::new();
    let outcome = train(
        params,
        &embeddings,
        &train_set.examples,
        dev_examples,
        &s.train_config(),
        |r| {
            metrics.append(r.metrics)?;
            let meta = serde_json::to_value(r.metrics).expect("metrics serialize");
            let mut save = |name: String| -> Result<(), TrainError> {
                save_checkpoint(out.join(&name), r.params, Some(EMBEDDINGS_FILE), meta.clone())
                    .map_err(|e| TrainError::Callback(e.to_string()))?;
                written.push(name);
                Ok(())
            };
            if r.scheduled {
                save(checkpoint_name(r.metrics.epoch))?;
            }
            if r.is_best {
                save(BEST_CHECKPOINT.into())?;
            }
            Ok(ControlFlow::Continue(()))
        },
    )?;
    manifest.artifacts.extend(written);
    let best = outcome
        .history
        .iter()
        .find(|m| m.epoch == outcome.best_epoch)
        .expect("best epoch in history");
    log::info!(
        "best epoch {}: dev EM {} F1 {}",
        best.epoch,
        best.dev_em.map_or("-".into(), |v| format!("{v:.2}")),
        best.dev_f1.map_or("-".into(), |v| format!("{v:.2}")),
    );
    Ok(())
}
