//! Exact match and token F1 under SQuAD v1.1 answer normalisation, with
//! breakdowns by gold answer length and question word.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{load_squad_json, DataError, LoadMode, RawExample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold answers to compare against")]
    EmptyGold,
    #[error("{path}: {message}")]
    Predictions { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercase, drop ASCII punctuation, drop the words `a`, `an`, `the`, and
/// split on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    // Articles are removed wherever they form a whole word, including next to
    // non-word symbols such as typographic quotes.
    let mut out = String::with_capacity(lowered.len());
    let mut chars = lowered.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_word_char(c) {
            out.push(c);
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = chars.peek() {
            if !is_word_char(d) {
                break;
            }
            end = j + d.len_utf8();
            chars.next();
        }
        let word = &lowered[i..end];
        if matches!(word, "a" | "an" | "the") {
            out.push(' ');
        } else {
            out.push_str(word);
        }
    }
    out.split_whitespace().map(str::to_owned).collect()
}

/// 1 when the normalised prediction equals any normalised gold.
pub fn exact_match(prediction: &str, golds: &[impl AsRef<str>]) -> Result<f64, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let p = normalize_answer(prediction);
    Ok(if golds.iter().any(|g| normalize_answer(g.as_ref()) == p) {
        1.0
    } else {
        0.0
    })
}

fn f1_tokens(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, isize> = HashMap::new();
    for g in gold {
        *counts.entry(g).or_default() += 1;
    }
    let mut overlap = 0usize;
    for p in pred {
        if let Some(c) = counts.get_mut(p.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-tokens F1 against the best matching gold.
pub fn token_f1(prediction: &str, golds: &[impl AsRef<str>]) -> Result<f64, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let p = normalize_answer(prediction);
    Ok(golds
        .iter()
        .map(|g| f1_tokens(&p, &normalize_answer(g.as_ref())))
        .fold(0.0, f64::max))
}

pub const QUESTION_TYPES: [&str; 8] = ["what", "how", "who", "when", "which", "where", "why", "other"];

/// First question word found scanning left to right, else `other`.
pub fn question_type(question: &str) -> &'static str {
    let lowered = question.to_lowercase();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .find_map(|w| QUESTION_TYPES[..7].iter().find(|&&k| k == w).copied())
        .unwrap_or("other")
}

pub const LENGTH_BUCKETS: [&str; 10] = ["1", "2", "3", "4", "5", "6", "7", "8", "9", ">9"];

/// Bucket index for a gold answer of `n` normalised tokens; 0 joins bucket 1.
pub fn length_bucket(n: usize) -> usize {
    n.clamp(1, 10) - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
    /// Percent.
    pub exact_match: f64,
    /// Percent.
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    /// Percent.
    pub exact_match: f64,
    /// Percent.
    pub f1: f64,
    /// Gold questions with no prediction, scored 0.
    pub missing: usize,
    pub by_answer_length: Vec<Bucket>,
    pub by_question_type: Vec<Bucket>,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    em: f64,
    f1: f64,
}

impl Acc {
    fn add(&mut self, em: f64, f1: f64) {
        self.n += 1;
        self.em += em;
        self.f1 += f1;
    }

    fn pct(&self, v: f64) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            100.0 * v / self.n as f64
        }
    }

    fn bucket(&self, label: &str) -> Bucket {
        Bucket {
            label: label.to_owned(),
            count: self.n,
            exact_match: self.pct(self.em),
            f1: self.pct(self.f1),
        }
    }
}

/// Scores predictions (question id to answer text) against gold examples.
/// Missing predictions score 0 and are counted.
pub fn evaluate(predictions: &BTreeMap<String, String>, golds: &[RawExample]) -> Result<EvalReport, EvalError> {
    let mut all = Acc::default();
    let mut by_len = [Acc::default(); 10];
    let mut by_type = [Acc::default(); 8];
    let mut missing = 0;
    for ex in golds {
        let texts: Vec<&str> = ex.answers.iter().map(|a| a.text.as_str()).collect();
        if texts.is_empty() {
            return Err(EvalError::EmptyGold);
        }
        let (em, f1) = match predictions.get(&ex.id) {
            Some(p) => (exact_match(p, &texts)?, token_f1(p, &texts)?),
            None => {
                missing += 1;
                (0.0, 0.0)
            }
        };
        all.add(em, f1);
        by_len[length_bucket(normalize_answer(texts[0]).len())].add(em, f1);
        let t = question_type(&ex.question);
        let ti = QUESTION_TYPES.iter().position(|&k| k == t).expect("known type");
        by_type[ti].add(em, f1);
    }
    if missing > 0 {
        log::warn!("{missing} of {} questions have no prediction; scored 0", golds.len());
    }
    Ok(EvalReport {
        total: all.n,
        exact_match: all.pct(all.em),
        f1: all.pct(all.f1),
        missing,
        by_answer_length: LENGTH_BUCKETS
            .iter()
            .zip(&by_len)
            .map(|(l, a)| a.bucket(l))
            .collect(),
        by_question_type: QUESTION_TYPES
            .iter()
            .zip(&by_type)
            .map(|(l, a)| a.bucket(l))
            .collect(),
    })
}

impl EvalReport {
    /// Both breakdown tables as one CSV: `group,bucket,count,em,f1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,bucket,count,em,f1\n");
        for (group, rows) in [
            ("answer_length", &self.by_answer_length),
            ("question_type", &self.by_question_type),
        ] {
            for b in rows {
                writeln!(out, "{group},{},{},{:.4},{:.4}", b.label, b.count, b.exact_match, b.f1)
                    .expect("write to string");
            }
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!("EM: {:.1}  F1: {:.1}", self.exact_match, self.f1)
    }
}

/// Reads an official-format prediction file: a JSON object of id to text.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, EvalError> {
    let path = path.as_ref();
    let err = |message: String| EvalError::Predictions {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

pub fn write_predictions(path: impl AsRef<Path>, predictions: &BTreeMap<String, String>) -> Result<(), EvalError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(predictions).expect("string map");
    fs::write(path, json).map_err(|e| EvalError::Predictions {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// `evaluate` over a prediction file and a SQuAD-format gold file.
pub fn evaluate_files(predictions: impl AsRef<Path>, gold: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
    let preds = read_predictions(predictions)?;
    let golds = load_squad_json(gold, LoadMode::Eval)?;
    evaluate(&preds, &golds)
}
