//! Generated SQuAD-format corpora and GloVe-format vector files for tests,
//! demos and small-scale experiments.
//!
//! A passage is a run of "sentences" of content words closed by `.` or `;`.
//! One content word, the anchor, occurs exactly once; the answer is the rest
//! of the anchor's sentence. The question names the anchor, so the task is
//! solvable by matching question against passage.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::data::{
    build_vocabulary, prepare_examples, write_squad_json, DataError, EmbeddingMatrix, GoldAnswer,
    LoadMode, RawExample, TokenizedExample, Vocabulary,
};
use crate::Scalar;

const DELIMITERS: [&str; 2] = [".", ";"];
const QUESTION_WORDS: [&str; 4] = ["what", "who", "which", "after"];

#[derive(Clone, Debug)]
pub struct CorpusConfig {
    pub examples: usize,
    /// Total distinct tokens: content words plus question words and delimiters.
    pub vocab_size: usize,
    pub min_passage: usize,
    pub max_passage: usize,
    pub max_answer: usize,
    /// Gold answers per question; extras add the anchor or trailing delimiter.
    pub golds_per_question: usize,
    pub seed: u64,
}

impl CorpusConfig {
    /// 50 examples over 100 tokens with passages of at most 20 tokens.
    pub fn overfit(seed: u64) -> Self {
        Self {
            examples: 50,
            vocab_size: 100,
            min_passage: 8,
            max_passage: 20,
            max_answer: 4,
            golds_per_question: 1,
            seed,
        }
    }

    /// A larger corpus for held-out comparisons.
    pub fn slice(examples: usize, golds_per_question: usize, seed: u64) -> Self {
        Self {
            examples,
            vocab_size: 400,
            min_passage: 12,
            max_passage: 30,
            max_answer: 5,
            golds_per_question,
            seed,
        }
    }

    fn content_words(&self) -> usize {
        self.vocab_size - DELIMITERS.len() - QUESTION_WORDS.len()
    }
}

/// Every token the generator can emit.
pub fn vocabulary(config: &CorpusConfig) -> Vec<String> {
    let mut v: Vec<String> = (0..config.content_words()).map(|i| format!("w{i}")).collect();
    v.extend(QUESTION_WORDS.iter().map(|s| (*s).to_owned()));
    v.extend(DELIMITERS.iter().map(|s| (*s).to_owned()));
    v
}

fn char_offset(words: &[String], index: usize) -> usize {
    words[..index].iter().map(|w| w.chars().count() + 1).sum()
}

/// Generates `config.examples` questions, each over its own passage.
pub fn generate_corpus(config: &CorpusConfig) -> Vec<RawExample> {
    assert!(config.content_words() >= 4, "vocabulary too small");
    assert!(config.min_passage >= config.max_answer + 2 && config.max_passage >= config.min_passage);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_content = config.content_words();
    let mut out = Vec::with_capacity(config.examples);
    for k in 0..config.examples {
        let len = rng.gen_range(config.min_passage..=config.max_passage);
        let anchor = rng.gen_range(0..n_content);
        let answer_len = rng.gen_range(1..=config.max_answer);
        let word = |rng: &mut ChaCha8Rng| loop {
            let w = rng.gen_range(0..n_content);
            if w != anchor {
                return format!("w{w}");
            }
        };

        // The anchor sentence: anchor, answer words, delimiter.
        let sentence_len = answer_len + 2;
        let start = rng.gen_range(0..=len - sentence_len);
        let mut words = Vec::with_capacity(len);
        let mut since_delim = 0;
        for i in 0..len {
            if i >= start && i < start + sentence_len {
                let j = i - start;
                words.push(if j == 0 {
                    format!("w{anchor}")
                } else if j == sentence_len - 1 {
                    DELIMITERS[rng.gen_range(0..2)].to_owned()
                } else {
                    word(&mut rng)
                });
                since_delim = 0;
                continue;
            }
            let delim = i + 1 == start || (since_delim >= 2 && rng.gen_bool(0.25));
            if delim && i > 0 {
                words.push(DELIMITERS[rng.gen_range(0..2)].to_owned());
                since_delim = 0;
            } else {
                words.push(word(&mut rng));
                since_delim += 1;
            }
        }

        let qw = QUESTION_WORDS[..3].choose(&mut rng).expect("non-empty");
        let mut question = vec![(*qw).to_owned(), "after".to_owned(), format!("w{anchor}")];
        if rng.gen_bool(0.5) {
            question.insert(1, word(&mut rng));
        }

        let a_s = start + 1;
        let a_e = start + answer_len;
        let text = words[a_s..=a_e].join(" ");
        let mut answers = vec![GoldAnswer {
            text: text.clone(),
            answer_start: char_offset(&words, a_s),
        }];
        for g in 1..config.golds_per_question {
            answers.push(if g % 2 == 1 {
                GoldAnswer {
                    text: words[a_s - 1..=a_e].join(" "),
                    answer_start: char_offset(&words, a_s - 1),
                }
            } else {
                GoldAnswer {
                    text: text.clone(),
                    answer_start: char_offset(&words, a_s),
                }
            });
        }
        out.push(RawExample {
            passage: Arc::from(words.join(" ")),
            question: question.join(" "),
            id: format!("syn-{}-{k}", config.seed),
            answers,
        });
    }
    out
}

/// Writes `examples` as a SQuAD v1.1 JSON file.
pub fn write_corpus(path: impl AsRef<Path>, examples: &[RawExample]) -> Result<(), DataError> {
    write_squad_json(path, examples, "synthetic")
}

/// Writes one random vector per token in GloVe text format.
pub fn write_glove(path: impl AsRef<Path>, tokens: &[String], dim: usize, seed: u64) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in tokens {
        let mut line = t.clone();
        for _ in 0..dim {
            let v: f64 = rng.gen_range(-1.0..1.0);
            line.push(' ');
            line.push_str(&format!("{v:.6}"));
        }
        writeln!(w, "{line}").map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Uniform(-1, 1) vectors for every vocabulary entry except `<unk>`, which
/// stays zero.
pub fn random_embeddings<T: Scalar>(vocab: &Vocabulary, dim: usize, seed: u64) -> EmbeddingMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = Tensor::from_fn(dim, vocab.len(), |_, c| {
        if c == 0 {
            T::zero()
        } else {
            T::from_f64_lossy(rng.gen_range(-1.0..1.0))
        }
    });
    EmbeddingMatrix::new(vocab.clone(), table)
}

/// A generated corpus ready for training.
#[derive(Clone, Debug)]
pub struct Fixture<T> {
    pub raw: Vec<RawExample>,
    pub examples: Vec<TokenizedExample>,
    pub embeddings: EmbeddingMatrix<T>,
}

pub fn fixture<T: Scalar>(config: &CorpusConfig, embedding_dim: usize) -> Fixture<T> {
    let raw = generate_corpus(config);
    let (examples, _) = prepare_examples(&raw, LoadMode::Train);
    let vocab = build_vocabulary([&examples[..]]);
    let embeddings = random_embeddings(&vocab, embedding_dim, config.seed ^ 0x5eed);
    Fixture {
        raw,
        examples,
        embeddings,
    }
}

/// A short real-text passage with three questions.
pub fn tesla_examples() -> Vec<RawExample> {
    let passage = "In 1870, Tesla moved to Karlovac, to attend school at the Higher Real \
        Gymnasium, where he was profoundly influenced by a math teacher Martin Sekulić. \
        The classes were held in German, as it was a school within the Austro-Hungarian \
        Military Frontier. Tesla was able to perform integral calculus in his head, which \
        prompted his teachers to believe that he was cheating. He finished a four-year term \
        in three years, graduating in 1873.";
    let at = |s: &str| -> usize {
        let b = passage.find(s).expect("answer in passage");
        passage[..b].chars().count()
    };
    let arc: Arc<str> = Arc::from(passage);
    [
        ("tesla-1", "In what language were the classes given?", "German"),
        ("tesla-2", "Who was Tesla's main influence in Karlovac?", "Martin Sekulić"),
        ("tesla-3", "Why did Tesla go to Karlovac?", "attend school at the Higher Real Gymnasium"),
    ]
    .into_iter()
    .map(|(id, q, a)| RawExample {
        passage: Arc::clone(&arc),
        question: q.into(),
        id: id.into(),
        answers: vec![GoldAnswer {
            text: a.into(),
            answer_start: at(a),
        }],
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare_examples, LoadMode, TokenizedPassage};
    use std::collections::HashSet;

    #[test]
    fn overfit_corpus_contract() {
        let cfg = CorpusConfig::overfit(3);
        let raw = generate_corpus(&cfg);
        assert_eq!(raw.len(), 50);
        let vocab: HashSet<String> = vocabulary(&cfg).into_iter().collect();
        assert_eq!(vocab.len(), 100);
        let (examples, stats) = prepare_examples(&raw, LoadMode::Train);
        assert_eq!(stats.dropped, 0);
        for ex in &examples {
            assert!(ex.passage.len() <= 20);
            for t in ex.passage_tokens().chain(ex.question_tokens()) {
                assert!(vocab.contains(t), "{t}");
            }
            let (s, _) = ex.target_span().unwrap();
            // The anchor right before the answer is named in the question.
            let anchor = &ex.passage.tokens[s - 1].text;
            assert!(ex.question_tokens().any(|q| q == anchor));
            assert_eq!(ex.passage_tokens().filter(|t| t == anchor).count(), 1);
        }
    }

    #[test]
    fn deterministic_and_aligned() {
        let cfg = CorpusConfig::slice(40, 3, 9);
        let a = generate_corpus(&cfg);
        assert_eq!(a, generate_corpus(&cfg));
        for ex in &a {
            assert_eq!(ex.answers.len(), 3);
            for g in &ex.answers {
                let p = TokenizedPassage::new(ex.passage.to_string());
                let (s, e) = p.align_answer_span(&g.text, g.answer_start).unwrap();
                assert_eq!(p.span_text(s, e).unwrap(), g.text);
            }
        }
    }

    #[test]
    fn tesla_offsets() {
        let ex = tesla_examples();
        let (examples, stats) = prepare_examples(&ex, LoadMode::Train);
        assert_eq!(stats.dropped, 0);
        assert_eq!(examples[1].passage.span_text(examples[1].gold_spans[0].0, examples[1].gold_spans[0].1).unwrap(), "Martin Sekulić");
    }

    #[test]
    fn glove_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        let toks = vec!["a".to_owned(), "b".to_owned()];
        write_glove(&path, &toks, 4, 1).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap().split(' ').count(), 5);
    }
}
