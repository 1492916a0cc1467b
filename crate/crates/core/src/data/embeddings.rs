use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::autodiff::Tensor;
use crate::container;
use crate::Scalar;

pub const UNK: &str = "<unk>";

/// Token -> column index. Index 0 is reserved for unknown tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<&str>())
    }
}

impl Vocabulary {
    /// Tokens keep first-seen order after the reserved unknown entry.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self {
            tokens: vec![UNK.to_owned()],
            index: HashMap::from([(UNK.to_owned(), 0)]),
        };
        for t in tokens {
            v.insert(t);
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index or the unknown slot.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// `d x |V|` matrix of embedding columns. Never updated by training.
#[derive(Clone, Debug)]
pub struct EmbeddingMatrix<T> {
    pub vocab: Vocabulary,
    pub matrix: Arc<Tensor<T>>,
    /// Vocabulary entries that received a vector (exact or lowercase hit).
    pub found: usize,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(vocab: Vocabulary, matrix: Tensor<T>) -> Self {
        assert_eq!(matrix.cols(), vocab.len());
        Self {
            vocab,
            matrix: Arc::new(matrix),
            found: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn ids<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.vocab.id(t)).collect()
    }

    pub fn column(&self, id: usize) -> Vec<T> {
        self.matrix.column_values(id)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| DataError::io(path, source))?;
        let header = EmbeddingHeader {
            dim: self.dim(),
            found: self.found,
            vocab: self.vocab.tokens.clone(),
        };
        let m = &self.matrix;
        container::write(
            BufWriter::new(file),
            EMBEDDING_MAGIC,
            &header,
            m.data().iter().map(|v| v.to_f64_lossy()),
        )
        .map_err(|e| DataError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DataError::io(path, source))?;
        let (header, payload): (EmbeddingHeader, _) =
            container::read(BufReader::new(file), EMBEDDING_MAGIC, |h: &EmbeddingHeader| {
                h.dim * h.vocab.len()
            })
            .map_err(|e| DataError::Format(format!("{}: {e}", path.display())))?;
        let vocab = Vocabulary::from_tokens(header.vocab.iter().skip(1).map(String::as_str));
        if vocab.tokens != header.vocab {
            return Err(DataError::Format(format!(
                "{}: vocabulary entries are not unique",
                path.display()
            )));
        }
        let matrix = Tensor::new(
            header.dim,
            vocab.len(),
            payload.into_iter().map(T::from_f64_lossy).collect(),
        );
        Ok(Self {
            vocab,
            matrix: Arc::new(matrix),
            found: header.found,
        })
    }
}

const EMBEDDING_MAGIC: &[u8; 8] = b"MLSTMEMB";

#[derive(Serialize, Deserialize)]
struct EmbeddingHeader {
    dim: usize,
    found: usize,
    vocab: Vec<String>,
}

/// Reads GloVe text vectors for the tokens of `vocab`.
///
/// Exact-case matches win; otherwise a token takes the vector of its
/// lowercase form. Tokens found neither way keep a zero column.
pub fn load_glove<T: Scalar>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
) -> Result<EmbeddingMatrix<T>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::io(path, source))?;
    read_glove(BufReader::new(file), vocab)
}

pub fn read_glove<T: Scalar, R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
) -> Result<EmbeddingMatrix<T>, DataError> {
    let mut lower: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, t) in vocab.tokens.iter().enumerate().skip(1) {
        lower.entry(t.to_lowercase()).or_default().push(i);
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Hit {
        None,
        Lower,
        Exact,
    }
    let mut hits = vec![Hit::None; vocab.len()];
    let mut columns: Vec<Vec<T>> = vec![Vec::new(); vocab.len()];
    let mut dim: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: "<glove>".into(),
            source,
        })?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| DataError::GloveParse {
                    line: lineno + 1,
                    field: f.to_owned(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(DataError::GloveDimension {
                    line: lineno + 1,
                    expected: d,
                    found: values.len(),
                })
            }
            _ => {}
        }
        let as_t = || values.iter().map(|&v| T::from_f64_lossy(v)).collect::<Vec<T>>();
        if let Some(i) = vocab.get(word).filter(|&i| i != 0) {
            columns[i] = as_t();
            hits[i] = Hit::Exact;
        }
        if word.chars().all(|c| !c.is_uppercase()) {
            if let Some(ids) = lower.get(word) {
                for &i in ids {
                    if hits[i] == Hit::None {
                        columns[i] = as_t();
                        hits[i] = Hit::Lower;
                    }
                }
            }
        }
    }

    let d = dim.unwrap_or(0);
    let mut matrix = Tensor::zeros(d, vocab.len());
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            matrix.set(r, c, v);
        }
    }
    Ok(EmbeddingMatrix {
        vocab: vocab.clone(),
        matrix: Arc::new(matrix),
        found: hits.iter().filter(|h| **h != Hit::None).count(),
    })
}
