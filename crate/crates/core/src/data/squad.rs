use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Whether empty answer lists are acceptable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadMode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub text: String,
    /// Character offset into the passage.
    pub answer_start: usize,
}

/// One question with its passage. Questions of the same paragraph share the
/// passage allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawExample {
    pub passage: Arc<str>,
    pub question: String,
    pub id: String,
    pub answers: Vec<GoldAnswer>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadFile {
    #[serde(default)]
    pub version: Option<String>,
    pub data: Vec<SquadArticle>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadArticle {
    #[serde(default)]
    pub title: Option<String>,
    pub paragraphs: Vec<SquadParagraph>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadParagraph {
    pub context: String,
    pub qas: Vec<SquadQa>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SquadQa {
    pub id: String,
    pub question: String,
    pub answers: Vec<GoldAnswer>,
}

pub fn load_squad_json(path: impl AsRef<Path>, mode: LoadMode) -> Result<Vec<RawExample>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_squad_json(&text, mode)
}

pub fn parse_squad_json(text: &str, mode: LoadMode) -> Result<Vec<RawExample>, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: SquadFile = serde_path_to_error::deserialize(de).map_err(|e| DataError::Json {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    from_squad(file, mode)
}

fn from_squad(file: SquadFile, mode: LoadMode) -> Result<Vec<RawExample>, DataError> {
    let mut out = Vec::new();
    for (ai, article) in file.data.into_iter().enumerate() {
        for (pi, para) in article.paragraphs.into_iter().enumerate() {
            let passage: Arc<str> = Arc::from(para.context.as_str());
            let n_chars = passage.chars().count();
            for (qi, qa) in para.qas.into_iter().enumerate() {
                if mode == LoadMode::Train && qa.answers.is_empty() {
                    return Err(DataError::NoAnswers {
                        path: format!("data[{ai}].paragraphs[{pi}].qas[{qi}]"),
                        id: qa.id,
                    });
                }
                if let Some(bad) = qa.answers.iter().find(|a| a.answer_start >= n_chars.max(1)) {
                    return Err(DataError::AnswerOutOfBounds {
                        id: qa.id.clone(),
                        start: bad.answer_start,
                        len: n_chars,
                    });
                }
                out.push(RawExample {
                    passage: Arc::clone(&passage),
                    question: qa.question,
                    id: qa.id,
                    answers: qa.answers,
                });
            }
        }
    }
    Ok(out)
}

/// Groups examples back into SQuAD v1.1 layout, one paragraph per distinct
/// passage, one article overall.
pub fn to_squad(examples: &[RawExample], title: &str) -> SquadFile {
    let mut paragraphs: Vec<SquadParagraph> = Vec::new();
    for ex in examples {
        let qa = SquadQa {
            id: ex.id.clone(),
            question: ex.question.clone(),
            answers: ex.answers.clone(),
        };
        match paragraphs.last_mut() {
            Some(p) if p.context == *ex.passage => p.qas.push(qa),
            _ => paragraphs.push(SquadParagraph {
                context: ex.passage.to_string(),
                qas: vec![qa],
            }),
        }
    }
    SquadFile {
        version: Some("1.1".into()),
        data: vec![SquadArticle {
            title: Some(title.into()),
            paragraphs,
        }],
    }
}

pub fn write_squad_json(
    path: impl AsRef<Path>,
    examples: &[RawExample],
    title: &str,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&to_squad(examples, title)).expect("serializable");
    fs::write(path, json).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}
