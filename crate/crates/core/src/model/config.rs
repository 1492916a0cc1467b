use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Emits passage positions one at a time until the stop position `P`.
    Sequence,
    /// Emits a start and an end position.
    Boundary,
}

impl std::str::FromStr for HeadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequence" => Ok(Self::Sequence),
            "boundary" => Ok(Self::Boundary),
            other => Err(format!("unknown head `{other}` (expected sequence|boundary)")),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sequence => "sequence",
            Self::Boundary => "boundary",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden size `l` of every LSTM and attention layer.
    pub hidden_dim: usize,
    /// Word vector size `d`.
    pub embedding_dim: usize,
    pub head: HeadKind,
    /// Adds a right-to-left preprocessing LSTM and projects `[fwd; rev]` back to `l`.
    pub bi_preprocess: bool,
    /// Adds a second boundary head that predicts end before start.
    pub bi_answer_pointer: bool,
    /// One preprocessing LSTM for passage and question.
    pub shared_preprocess: bool,
}

impl ModelConfig {
    pub fn new(hidden_dim: usize, embedding_dim: usize, head: HeadKind) -> Self {
        Self {
            hidden_dim,
            embedding_dim,
            head,
            bi_preprocess: false,
            bi_answer_pointer: false,
            shared_preprocess: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim == 0 || self.embedding_dim == 0 {
            return Err(ModelError::Config(format!(
                "hidden_dim ({}) and embedding_dim ({}) must be at least 1",
                self.hidden_dim, self.embedding_dim
            )));
        }
        if self.bi_answer_pointer && self.head != HeadKind::Boundary {
            return Err(ModelError::Config(
                "the bidirectional answer pointer needs the boundary head".into(),
            ));
        }
        Ok(())
    }

    /// Preprocessing LSTM parameter prefixes: `[passage, question]`.
    pub(crate) fn encoder_prefixes(&self) -> [&'static str; 2] {
        if self.shared_preprocess {
            ["pre", "pre"]
        } else {
            ["pre_passage", "pre_question"]
        }
    }
}
