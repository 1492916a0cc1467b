//! SQuAD loading, tokenization, answer alignment, GloVe and batching.

mod batch;
mod cache;
mod embeddings;
mod squad;
mod tokenize;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::batchify;
pub use cache::{cache_key, load_or_prepare, PreparedCorpus};
pub use embeddings::{load_glove, read_glove, EmbeddingMatrix, Vocabulary, UNK};
pub use squad::{
    load_squad_json, parse_squad_json, to_squad, write_squad_json, GoldAnswer, LoadMode,
    RawExample, SquadArticle, SquadFile, SquadParagraph, SquadQa,
};
pub use tokenize::{tokenize, AlignError, SpanError, Token, TokenizedPassage};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid SQuAD JSON at `{path}`: {message}")]
    Json { path: String, message: String },
    #[error("question {id} at {path} has no answers")]
    NoAnswers { path: String, id: String },
    #[error("question {id}: answer_start {start} outside passage of {len} characters")]
    AnswerOutOfBounds { id: String, start: usize, len: usize },
    #[error("GloVe line {line}: expected {expected} values, found {found}")]
    GloveDimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("GloVe line {line}: cannot parse `{field}` as a number")]
    GloveParse { line: usize, field: String },
    #[error("{0}")]
    Format(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A question over a tokenized passage, with gold spans as inclusive 0-based
/// token indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub id: String,
    pub passage: Arc<TokenizedPassage>,
    pub question: Vec<Token>,
    pub gold_spans: Vec<(usize, usize)>,
    pub gold_texts: Vec<String>,
}

impl TokenizedExample {
    pub fn passage_tokens(&self) -> impl Iterator<Item = &str> {
        self.passage.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn question_tokens(&self) -> impl Iterator<Item = &str> {
        self.question.iter().map(|t| t.text.as_str())
    }

    /// Training target: the first gold span.
    pub fn target_span(&self) -> Option<(usize, usize)> {
        self.gold_spans.first().copied()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepStats {
    pub examples: usize,
    pub dropped: usize,
}

/// Tokenizes passages (once per distinct passage) and questions, and aligns
/// gold answers.
///
/// Training keeps only the first answer and drops examples whose answer does
/// not align. Evaluation keeps every gold text and whatever spans align.
pub fn prepare_examples(raw: &[RawExample], mode: LoadMode) -> (Vec<TokenizedExample>, PrepStats) {
    let mut passages: HashMap<*const u8, Arc<TokenizedPassage>> = HashMap::new();
    let mut out = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for ex in raw {
        let passage = passages
            .entry(ex.passage.as_ptr())
            .or_insert_with(|| Arc::new(TokenizedPassage::new(ex.passage.to_string())))
            .clone();
        let question = tokenize(&ex.question);
        let answers: &[GoldAnswer] = match mode {
            LoadMode::Train => &ex.answers[..ex.answers.len().min(1)],
            LoadMode::Eval => &ex.answers,
        };
        let mut gold_spans = Vec::new();
        let mut failed = false;
        for a in answers {
            match passage.align_answer_span(&a.text, a.answer_start) {
                Ok(span) => gold_spans.push(span),
                Err(err) => {
                    log::debug!("question {}: {err}", ex.id);
                    failed = true;
                }
            }
        }
        if mode == LoadMode::Train && (failed || gold_spans.is_empty() || question.is_empty()) {
            dropped += 1;
            continue;
        }
        out.push(TokenizedExample {
            id: ex.id.clone(),
            passage,
            question,
            gold_spans,
            gold_texts: answers.iter().map(|a| a.text.clone()).collect(),
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} of {} examples with unalignable answers", raw.len());
    }
    let stats = PrepStats {
        examples: out.len(),
        dropped,
    };
    (out, stats)
}

/// Vocabulary over every passage and question token of the given sets.
pub fn build_vocabulary<'a>(sets: impl IntoIterator<Item = &'a [TokenizedExample]>) -> Vocabulary {
    let mut vocab = Vocabulary::default();
    for set in sets {
        for ex in set {
            for t in ex.passage_tokens().chain(ex.question_tokens()) {
                vocab.insert(t);
            }
        }
    }
    vocab
}
