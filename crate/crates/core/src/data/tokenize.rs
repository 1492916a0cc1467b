use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A token with its half-open character range `[start, end)` in the source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Whitespace split, then leading and trailing ASCII punctuation peeled off
/// one character at a time. Inner punctuation (hyphens, apostrophes,
/// decimal points) stays inside the word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut chunk: Vec<char> = Vec::new();
    let mut chunk_start = 0;
    let mut pos = 0;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !chunk.is_empty() {
                split_chunk(&chunk, chunk_start, &mut tokens);
                chunk.clear();
            }
            chunk_start = pos + 1;
        } else {
            chunk.push(ch);
        }
        pos += 1;
    }
    if !chunk.is_empty() {
        split_chunk(&chunk, chunk_start, &mut tokens);
    }
    tokens
}

fn split_chunk(chunk: &[char], offset: usize, out: &mut Vec<Token>) {
    let single = |i: usize| Token {
        text: chunk[i].to_string(),
        start: offset + i,
        end: offset + i + 1,
    };
    let mut lo = 0;
    let mut hi = chunk.len();
    while lo < hi && chunk[lo].is_ascii_punctuation() {
        lo += 1;
    }
    while hi > lo && chunk[hi - 1].is_ascii_punctuation() {
        hi -= 1;
    }
    out.extend((0..lo).map(single));
    if lo < hi {
        out.push(Token {
            text: chunk[lo..hi].iter().collect(),
            start: offset + lo,
            end: offset + hi,
        });
    }
    out.extend((hi..chunk.len()).map(single));
}

/// A passage with its tokens and a char -> byte offset table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedPassage {
    pub text: String,
    pub tokens: Vec<Token>,
    #[serde(skip)]
    char_bytes: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("answer range {start}..{end} exceeds passage of {len} characters")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("answer range {start}..{end} covers no token")]
    NoToken { start: usize, end: usize },
    #[error("covering span {span:?} does not contain the answer text")]
    NotContained { span: (usize, usize) },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("span ({0}, {1}) is not valid for a passage of {2} tokens")]
pub struct SpanError(pub usize, pub usize, pub usize);

impl TokenizedPassage {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        let mut p = Self {
            text,
            tokens,
            char_bytes: Vec::new(),
        };
        p.rebuild_index();
        p
    }

    /// Must be called after deserialising.
    pub fn rebuild_index(&mut self) {
        self.char_bytes = self
            .text
            .char_indices()
            .map(|(b, _)| b)
            .chain(std::iter::once(self.text.len()))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn char_len(&self) -> usize {
        self.char_bytes.len().saturating_sub(1)
    }

    /// Substring between two character offsets.
    pub fn char_slice(&self, start: usize, end: usize) -> &str {
        &self.text[self.char_bytes[start]..self.char_bytes[end]]
    }

    /// Original passage text from the start of token `s` to the end of token
    /// `e`, inclusive, spacing preserved.
    pub fn span_text(&self, s: usize, e: usize) -> Result<&str, SpanError> {
        if s > e || e >= self.tokens.len() {
            return Err(SpanError(s, e, self.tokens.len()));
        }
        Ok(self.char_slice(self.tokens[s].start, self.tokens[e].end))
    }

    /// Minimal token span covering the characters
    /// `[answer_start, answer_start + chars(answer))`.
    pub fn align_answer_span(
        &self,
        answer: &str,
        answer_start: usize,
    ) -> Result<(usize, usize), AlignError> {
        let (s, e) = self.covering_span(answer, answer_start)?;
        let covered = self.span_text(s, e).expect("covering span is valid");
        if !covered.contains(answer) {
            return Err(AlignError::NotContained { span: (s, e) });
        }
        Ok((s, e))
    }

    /// Covering span without the containment check.
    pub fn covering_span(
        &self,
        answer: &str,
        answer_start: usize,
    ) -> Result<(usize, usize), AlignError> {
        let start = answer_start;
        let end = answer_start + answer.chars().count();
        if end > self.char_len() {
            return Err(AlignError::OutOfBounds {
                start,
                end,
                len: self.char_len(),
            });
        }
        let first = self.tokens.iter().position(|t| t.end > start);
        let last = self.tokens.iter().rposition(|t| t.start < end);
        match (first, last) {
            (Some(s), Some(e)) if s <= e => Ok((s, e)),
            _ => Err(AlignError::NoToken { start, end }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    const TESLA: &str = "In 1870, Tesla moved to Karlovac, to attend school at the Higher Real \
        Gymnasium, where he was profoundly influenced by a math teacher Martin Sekulić. The \
        classes were held in German, as it was a school within the Austro-Hungarian Military \
        Frontier.";

    #[test]
    fn punctuation_is_split_from_words() {
        assert_eq!(
            texts(&tokenize("In 1870, Tesla moved")),
            vec!["In", "1870", ",", "Tesla", "moved"]
        );
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \n\t ").is_empty());
    }

    #[test]
    fn unicode_letters_stay_inside_tokens() {
        let t = tokenize("Sekulić.");
        assert_eq!(texts(&t), vec!["Sekulić", "."]);
        assert_eq!((t[0].start, t[0].end, t[1].start), (0, 7, 7));
    }

    #[test]
    fn hyphens_and_inner_punctuation_stay() {
        assert_eq!(
            texts(&tokenize("(Austro-Hungarian) Tesla's \"U.S.\"")),
            vec!["(", "Austro-Hungarian", ")", "Tesla's", "\"", "U.S", ".", "\""]
        );
    }

    #[test]
    fn align_single_word() {
        let p = TokenizedPassage::new(TESLA);
        let start = TESLA[..TESLA.find("German").unwrap()].chars().count();
        let (s, e) = p.align_answer_span("German", start).unwrap();
        assert_eq!((s, e), (s, s));
        assert_eq!(p.tokens[s].text, "German");
    }

    #[test]
    fn align_mid_token_expands_to_full_token() {
        let p = TokenizedPassage::new(TESLA);
        let start = TESLA[..TESLA.find("German").unwrap()].chars().count() + 1;
        let (s, e) = p.align_answer_span("erman", start).unwrap();
        assert_eq!(s, e);
        assert_eq!(p.span_text(s, e).unwrap(), "German");
    }

    #[test]
    fn align_whole_passage() {
        let text = "The classes were held in German.";
        let p = TokenizedPassage::new(text);
        assert_eq!(p.align_answer_span(text, 0).unwrap(), (0, p.len() - 1));
    }

    #[test]
    fn align_multibyte_answer() {
        let p = TokenizedPassage::new(TESLA);
        // Offsets are in characters; "German" sits after the multi-byte "ć".
        let byte_start = TESLA.find("German").unwrap();
        let char_start = TESLA[..byte_start].chars().count();
        assert_ne!(byte_start, char_start);
        let (s, e) = p.align_answer_span("German", char_start).unwrap();
        assert_eq!(p.span_text(s, e).unwrap(), "German");
        let m = TESLA[..TESLA.find("Martin").unwrap()].chars().count();
        let (s, e) = p.align_answer_span("Martin Sekulić", m).unwrap();
        assert_eq!(p.span_text(s, e).unwrap(), "Martin Sekulić");
    }

    #[test]
    fn align_failures() {
        let p = TokenizedPassage::new("abc def");
        assert!(matches!(
            p.align_answer_span("zzzzzzzzzz", 0),
            Err(AlignError::OutOfBounds { .. })
        ));
        assert!(matches!(
            p.align_answer_span("xyz", 4),
            Err(AlignError::NotContained { .. })
        ));
        let spaced = TokenizedPassage::new("abc   def");
        assert!(matches!(
            spaced.align_answer_span(" ", 4),
            Err(AlignError::NoToken { .. })
        ));
    }

    proptest! {
        #[test]
        fn tokens_cover_every_non_whitespace_char(text in "\\PC{0,60}") {
            let chars: Vec<char> = text.chars().collect();
            let tokens = tokenize(&text);
            let mut owner = vec![None; chars.len()];
            let mut prev_end = 0;
            for (i, t) in tokens.iter().enumerate() {
                prop_assert!(t.start < t.end);
                prop_assert!(t.start >= prev_end);
                prev_end = t.end;
                let slice: String = chars[t.start..t.end].iter().collect();
                prop_assert_eq!(&slice, &t.text);
                for slot in &mut owner[t.start..t.end] {
                    prop_assert!(slot.is_none());
                    *slot = Some(i);
                }
            }
            for (c, o) in chars.iter().zip(&owner) {
                prop_assert_eq!(c.is_whitespace(), o.is_none());
            }
        }

        #[test]
        fn aligned_span_contains_answer(text in "[a-zA-Z,.;'\\- ]{1,80}", a in 0usize..80, len in 1usize..20) {
            let p = TokenizedPassage::new(text.clone());
            let n = p.char_len();
            prop_assume!(a < n);
            let end = (a + len).min(n);
            let answer = p.char_slice(a, end).to_owned();
            if let Ok((s, e)) = p.align_answer_span(&answer, a) {
                prop_assert!(s <= e && e < p.len());
                prop_assert!(p.span_text(s, e).unwrap().contains(&answer));
            }
        }
    }
}
