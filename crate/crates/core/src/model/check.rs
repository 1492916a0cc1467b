use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_gradients, BackwardFault, GradCheckReport, Tensor};
use crate::data::{EmbeddingMatrix, Vocabulary};

use super::{build_model_graph, ModelConfig, ModelError, ModelParams, Target, Unroll};

/// A random end-to-end gradient check instance.
#[derive(Clone, Debug)]
pub struct GradCheckSetup {
    pub config: ModelConfig,
    pub passage_len: usize,
    pub question_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Weight matrices are drawn from uniform(-init_scale, init_scale);
    /// bias vectors keep their usual initial values.
    pub init_scale: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub fault: Option<BackwardFault>,
}

impl GradCheckSetup {
    pub fn new(config: ModelConfig, passage_len: usize, question_len: usize) -> Self {
        Self {
            config,
            passage_len,
            question_len,
            vocab_size: 12,
            seed: 0,
            init_scale: 1.0,
            epsilon: 1e-5,
            tolerance: 1e-4,
            fault: None,
        }
    }
}

/// Random parameters, embeddings, passage, question and gold span, then
/// analytic vs central-difference gradients of the training loss.
pub fn model_gradcheck(setup: &GradCheckSetup) -> Result<GradCheckReport, ModelError> {
    let cfg = &setup.config;
    cfg.validate()?;
    if setup.passage_len == 0 {
        return Err(ModelError::EmptyPassage);
    }
    if setup.question_len == 0 {
        return Err(ModelError::EmptyQuestion);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut params = ModelParams::<f64>::init(cfg, &mut rng);
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let scale = setup.init_scale;
    for n in names {
        let t = params.get_mut(&n).expect("known name");
        if t.cols() > 1 {
            for v in t.data_mut() {
                *v = rng.gen_range(-scale..=scale);
            }
        }
    }

    let words: Vec<String> = (1..setup.vocab_size.max(2)).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::from_tokens(words.iter().map(String::as_str));
    let n_vocab = vocab.len();
    let table = Tensor::from_fn(cfg.embedding_dim, n_vocab, |_, c| {
        if c == 0 {
            0.0
        } else {
            rng.gen_range(-1.0..1.0)
        }
    });
    let emb = EmbeddingMatrix::new(vocab, table);
    let passage: Vec<usize> = (0..setup.passage_len).map(|_| rng.gen_range(0..n_vocab)).collect();
    let question: Vec<usize> = (0..setup.question_len).map(|_| rng.gen_range(0..n_vocab)).collect();
    let s = rng.gen_range(0..setup.passage_len);
    let e = rng.gen_range(s..setup.passage_len);

    let mut mg = build_model_graph::<f64>(
        cfg,
        &passage,
        &question,
        Unroll::Train(Target::for_span(cfg.head, (s, e), setup.passage_len)),
    )?;
    if let Some(f) = setup.fault {
        mg.graph.inject_backward_fault(f);
    }
    let loss = mg.loss.expect("training graph");
    Ok(check_gradients(
        &mut mg.graph,
        loss,
        &params.bindings(&emb),
        setup.epsilon,
        setup.tolerance,
    )?)
}
