//! From pointer distributions to answer spans and strings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EmbeddingMatrix, SpanError, TokenizedExample, TokenizedPassage};
use crate::model::{predict, ModelError, ModelParams, PointerDistributions, Prediction, SEQUENCE_CAP};
use crate::Scalar;

pub const DEFAULT_MAX_SPAN: usize = 15;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("max span must be at least 1")]
    ZeroMaxSpan,
    #[error("empty distribution")]
    Empty,
    #[error("start has {start} positions but end has {end}")]
    LengthMismatch { start: usize, end: usize },
    #[error("ensemble member {member} covers {found} positions, expected {expected}")]
    MemberMismatch {
        member: usize,
        expected: usize,
        found: usize,
    },
    #[error("no ensemble members")]
    NoMembers,
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error("question {id}: {source}")]
    Model {
        id: String,
        #[source]
        source: ModelError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Search,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "search" => Ok(Self::Search),
            other => Err(format!("unknown strategy `{other}` (expected greedy|search)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_span: usize,
    pub strategy: Strategy,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_span: DEFAULT_MAX_SPAN,
            strategy: Strategy::Search,
        }
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax<T: Scalar>(v: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.map_or(true, |(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

fn check_pair<T>(start: &[T], end: &[T], max_span: usize) -> Result<(), DecodeError> {
    if max_span == 0 {
        return Err(DecodeError::ZeroMaxSpan);
    }
    if start.len() != end.len() {
        return Err(DecodeError::LengthMismatch {
            start: start.len(),
            end: end.len(),
        });
    }
    if start.is_empty() {
        return Err(DecodeError::Empty);
    }
    Ok(())
}

/// Best `(s, e)` with `s <= e < s + max_span` by `start[s] * end[e]`, with
/// its score. Ties go to the smaller `s`, then the smaller `e`.
pub fn search_boundary_decode<T: Scalar>(
    start: &[T],
    end: &[T],
    max_span: usize,
) -> Result<((usize, usize), T), DecodeError> {
    check_pair(start, end, max_span)?;
    let p = start.len();
    let mut best = ((0, 0), start[0] * end[0]);
    for s in 0..p {
        for e in s..p.min(s + max_span) {
            let score = start[s] * end[e];
            if score > best.1 {
                best = ((s, e), score);
            }
        }
    }
    Ok(best)
}

/// Independent argmax of start and end; falls back to the length-limited
/// search when the end lands before the start.
pub fn greedy_boundary_decode<T: Scalar>(
    start: &[T],
    end: &[T],
    max_span: usize,
) -> Result<(usize, usize), DecodeError> {
    check_pair(start, end, max_span)?;
    let s = argmax(start).expect("non-empty");
    let e = argmax(end).expect("non-empty");
    if e < s {
        return Ok(search_boundary_decode(start, end, max_span)?.0);
    }
    Ok((s, e))
}

/// Multiplies member distributions elementwise, without renormalising, and
/// searches the product.
pub fn ensemble_boundary_decode<T: Scalar>(
    members: &[(Vec<T>, Vec<T>)],
    max_span: usize,
) -> Result<(usize, usize), DecodeError> {
    let p = members.first().ok_or(DecodeError::NoMembers)?.0.len();
    let mut start = vec![T::one(); p];
    let mut end = vec![T::one(); p];
    for (m, (s, e)) in members.iter().enumerate() {
        for found in [s.len(), e.len()] {
            if found != p {
                return Err(DecodeError::MemberMismatch {
                    member: m,
                    expected: p,
                    found,
                });
            }
        }
        for i in 0..p {
            start[i] = start[i] * s[i];
            end[i] = end[i] * e[i];
        }
    }
    Ok(search_boundary_decode(&start, &end, max_span)?.0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceDecode {
    pub indices: Vec<usize>,
    /// No stop index before the unroll cap.
    pub truncated: bool,
}

/// Argmax at each step until the stop index `passage_len` is chosen. The
/// rows come from an unroll that fed soft distributions back into the
/// answer LSTM, so they do not depend on earlier choices.
pub fn greedy_sequence_decode<T: Scalar>(betas: &[Vec<T>], passage_len: usize) -> SequenceDecode {
    let mut indices = Vec::new();
    for row in betas {
        match argmax(row) {
            Some(i) if i == passage_len => {
                return SequenceDecode {
                    indices,
                    truncated: false,
                }
            }
            Some(i) => indices.push(i),
            None => break,
        }
    }
    SequenceDecode {
        indices,
        truncated: true,
    }
}

/// Original passage text from the start of token `s` to the end of token `e`.
pub fn span_to_text(passage: &TokenizedPassage, span: (usize, usize)) -> Result<String, DecodeError> {
    Ok(passage.span_text(span.0, span.1)?.to_owned())
}

/// Text for a list of emitted positions: the original substring when the
/// positions are consecutive and ascending, otherwise the token texts joined
/// by single spaces.
pub fn indices_to_text(passage: &TokenizedPassage, indices: &[usize]) -> Result<String, DecodeError> {
    let (Some(&first), Some(&last)) = (indices.first(), indices.last()) else {
        return Ok(String::new());
    };
    if indices.windows(2).all(|w| w[1] == w[0] + 1) {
        return span_to_text(passage, (first, last));
    }
    let mut words = Vec::with_capacity(indices.len());
    for &i in indices {
        let tok = passage
            .tokens
            .get(i)
            .ok_or(SpanError(i, i, passage.len()))?;
        words.push(tok.text.as_str());
    }
    Ok(words.join(" "))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedAnswer {
    pub text: String,
    pub indices: Vec<usize>,
    pub truncated: bool,
}

/// Decodes one model output against its passage.
pub fn decode_prediction<T: Scalar>(
    dist: &PointerDistributions<T>,
    passage: &TokenizedPassage,
    config: &DecodeConfig,
) -> Result<DecodedAnswer, DecodeError> {
    match dist {
        PointerDistributions::Boundary { start, end } => {
            let (s, e) = match config.strategy {
                Strategy::Greedy => greedy_boundary_decode(start, end, config.max_span)?,
                Strategy::Search => search_boundary_decode(start, end, config.max_span)?.0,
            };
            Ok(DecodedAnswer {
                text: span_to_text(passage, (s, e))?,
                indices: (s..=e).collect(),
                truncated: false,
            })
        }
        PointerDistributions::Sequence(betas) => {
            let d = greedy_sequence_decode(betas, passage.len());
            Ok(DecodedAnswer {
                text: indices_to_text(passage, &d.indices)?,
                indices: d.indices,
                truncated: d.truncated,
            })
        }
    }
}

/// Decodes an ensemble of boundary outputs for one passage.
pub fn decode_ensemble<T: Scalar>(
    members: &[(Vec<T>, Vec<T>)],
    passage: &TokenizedPassage,
    max_span: usize,
) -> Result<DecodedAnswer, DecodeError> {
    let (s, e) = ensemble_boundary_decode(members, max_span)?;
    Ok(DecodedAnswer {
        text: span_to_text(passage, (s, e))?,
        indices: (s..=e).collect(),
        truncated: false,
    })
}

/// Runs the model on one tokenized example.
pub fn example_prediction<T: Scalar>(
    params: &ModelParams<T>,
    embeddings: &EmbeddingMatrix<T>,
    example: &TokenizedExample,
) -> Result<Prediction<T>, DecodeError> {
    let p = embeddings.ids(example.passage_tokens());
    let q = embeddings.ids(example.question_tokens());
    predict(params, embeddings, &p, &q, SEQUENCE_CAP).map_err(|source| DecodeError::Model {
        id: example.id.clone(),
        source,
    })
}

/// Decoded answers for every example, in input order.
pub fn predict_examples<T: Scalar>(
    params: &ModelParams<T>,
    embeddings: &EmbeddingMatrix<T>,
    examples: &[TokenizedExample],
    config: &DecodeConfig,
) -> Result<Vec<DecodedAnswer>, DecodeError> {
    examples
        .par_iter()
        .map(|ex| {
            let pred = example_prediction(params, embeddings, ex)?;
            decode_prediction(&pred.distributions, &ex.passage, config)
        })
        .collect()
}

/// Product-of-distributions decoding over boundary models that may each
/// carry their own embeddings.
pub fn predict_examples_ensemble<T: Scalar>(
    members: &[(&ModelParams<T>, &EmbeddingMatrix<T>)],
    examples: &[TokenizedExample],
    max_span: usize,
) -> Result<Vec<DecodedAnswer>, DecodeError> {
    examples
        .par_iter()
        .map(|ex| {
            let mut dists = Vec::with_capacity(members.len());
            for (params, emb) in members {
                match example_prediction(params, emb, ex)?.distributions {
                    PointerDistributions::Boundary { start, end } => dists.push((start, end)),
                    PointerDistributions::Sequence(_) => {
                        return Err(DecodeError::Model {
                            id: ex.id.clone(),
                            source: ModelError::Config("ensembles need boundary models".into()),
                        })
                    }
                }
            }
            decode_ensemble(&dists, &ex.passage, max_span)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use proptest::strategy::Strategy as _;

    fn brute(start: &[f64], end: &[f64], max_span: usize) -> (usize, usize) {
        let mut best = (0, 0);
        let mut score = f64::NEG_INFINITY;
        for s in 0..start.len() {
            for e in s..start.len() {
                if e - s + 1 <= max_span && start[s] * end[e] > score {
                    score = start[s] * end[e];
                    best = (s, e);
                }
            }
        }
        best
    }

    #[test]
    fn hand_cases() {
        let s: [f64; 3] = [0.1, 0.6, 0.3];
        let e = [0.2, 0.1, 0.7];
        assert_eq!(greedy_boundary_decode(&s, &e, 15).unwrap(), (1, 2));
        let ((span, p), (span1, p1)) = (
            search_boundary_decode(&s, &e, 15).unwrap(),
            search_boundary_decode(&s, &e, 1).unwrap(),
        );
        assert_eq!(span, (1, 2));
        assert!((p - 0.42).abs() < 1e-12);
        assert_eq!(span1, (2, 2));
        assert!((p1 - 0.21).abs() < 1e-12);
        assert_eq!(greedy_boundary_decode(&[1.0], &[1.0], 15).unwrap(), (0, 0));
        assert_eq!(search_boundary_decode(&[0.25; 4], &[0.25; 4], 15).unwrap().0, (0, 0));
    }

    #[test]
    fn greedy_falls_back_on_inverted_span() {
        let s = [0.05, 0.05, 0.1, 0.7, 0.1];
        let e = [0.1, 0.6, 0.1, 0.15, 0.05];
        let got = greedy_boundary_decode(&s, &e, 15).unwrap();
        assert!(got.0 <= got.1);
        assert_eq!(got, search_boundary_decode(&s, &e, 15).unwrap().0);
        assert_eq!(got, (3, 3));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            search_boundary_decode::<f64>(&[1.0], &[1.0], 0),
            Err(DecodeError::ZeroMaxSpan)
        ));
        assert!(matches!(
            search_boundary_decode(&[0.5, 0.5], &[1.0], 2),
            Err(DecodeError::LengthMismatch { .. })
        ));
        let members = vec![(vec![0.5, 0.5], vec![0.5, 0.5]), (vec![1.0], vec![1.0])];
        assert!(matches!(
            ensemble_boundary_decode(&members, 3),
            Err(DecodeError::MemberMismatch { member: 1, .. })
        ));
        assert!(matches!(
            ensemble_boundary_decode::<f64>(&[], 3),
            Err(DecodeError::NoMembers)
        ));
    }

    #[test]
    fn ensemble_of_one_and_of_twins() {
        let s = vec![0.2, 0.5, 0.3];
        let e = vec![0.3, 0.3, 0.4];
        let single = search_boundary_decode(&s, &e, 2).unwrap().0;
        assert_eq!(ensemble_boundary_decode(&[(s.clone(), e.clone())], 2).unwrap(), single);
        assert_eq!(
            ensemble_boundary_decode(&[(s.clone(), e.clone()), (s, e)], 2).unwrap(),
            single
        );
    }

    #[test]
    fn sequence_traces() {
        // P = 3, stop index 3.
        let stop_first = vec![vec![0.1, 0.1, 0.1, 0.7]];
        assert_eq!(
            greedy_sequence_decode(&stop_first, 3),
            SequenceDecode {
                indices: vec![],
                truncated: false
            }
        );
        let trace = vec![
            vec![0.1, 0.6, 0.2, 0.1],
            vec![0.1, 0.1, 0.7, 0.1],
            vec![0.1, 0.1, 0.1, 0.7],
            vec![0.9, 0.0, 0.0, 0.1],
        ];
        assert_eq!(greedy_sequence_decode(&trace, 3).indices, vec![1, 2]);
        let never = vec![vec![0.4, 0.3, 0.2, 0.1]; 30];
        let d = greedy_sequence_decode(&never, 3);
        assert!(d.truncated);
        assert_eq!(d.indices.len(), 30);
    }

    #[test]
    fn texts() {
        let p = TokenizedPassage::new("taught by Professor Martin Sekulić, who");
        assert_eq!(span_to_text(&p, (3, 4)).unwrap(), "Martin Sekulić");
        assert_eq!(span_to_text(&p, (2, 2)).unwrap(), "Professor");
        assert_eq!(span_to_text(&p, (0, p.len() - 1)).unwrap(), p.text);
        assert!(span_to_text(&p, (3, 99)).is_err());
        assert_eq!(indices_to_text(&p, &[3, 4, 5]).unwrap(), "Martin Sekulić,");
        assert_eq!(indices_to_text(&p, &[4, 3]).unwrap(), "Sekulić Martin");
        assert_eq!(indices_to_text(&p, &[]).unwrap(), "");
    }

    fn dist(len: usize) -> impl proptest::strategy::Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len)
    }

    proptest! {
        #[test]
        fn search_matches_brute_force(
            (s, e) in (1usize..30).prop_flat_map(|p| (dist(p), dist(p))),
            max_span in 1usize..35,
        ) {
            let (got, _) = search_boundary_decode(&s, &e, max_span).unwrap();
            prop_assert_eq!(got, brute(&s, &e, max_span));
            prop_assert!(got.0 <= got.1 && got.1 - got.0 < max_span);
        }
    }
}
