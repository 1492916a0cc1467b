use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    parse_squad_json, prepare_examples, DataError, LoadMode, PrepStats, RawExample, Token,
    TokenizedExample, TokenizedPassage,
};

/// Bumped whenever tokenization or alignment output changes.
const PIPELINE_VERSION: u32 = 1;

/// Raw and tokenized views of one SQuAD file.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub raw: Vec<RawExample>,
    pub examples: Vec<TokenizedExample>,
    pub stats: PrepStats,
    pub from_cache: bool,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: String,
    passages: Vec<TokenizedPassage>,
    examples: Vec<CachedExample>,
    stats: PrepStats,
}

#[derive(Serialize, Deserialize)]
struct CachedExample {
    id: String,
    passage: usize,
    question: Vec<Token>,
    gold_spans: Vec<(usize, usize)>,
    gold_texts: Vec<String>,
}

/// SHA-256 over the input bytes, the load mode and the pipeline version.
pub fn cache_key(input: &[u8], mode: LoadMode) -> String {
    let mut h = Sha256::new();
    h.update(PIPELINE_VERSION.to_le_bytes());
    h.update([mode as u8]);
    h.update(input);
    hex::encode(h.finalize())
}

/// Loads a SQuAD file and its tokenized form. With a cache directory, the
/// tokenized form is read from `<dir>/<key>.json` when present and written
/// there otherwise.
pub fn load_or_prepare(
    path: impl AsRef<Path>,
    mode: LoadMode,
    cache_dir: Option<&Path>,
) -> Result<PreparedCorpus, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DataError::io(path, source))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| DataError::Format(format!("{}: {e}", path.display())))?;
    let raw = parse_squad_json(text, mode)?;

    let key = cache_key(&bytes, mode);
    let cache_path = cache_dir.map(|d| d.join(format!("{key}.json")));
    if let Some(cp) = &cache_path {
        if let Some(examples) = read_cache(cp, &key) {
            let (examples, stats) = examples;
            return Ok(PreparedCorpus {
                raw,
                examples,
                stats,
                from_cache: true,
            });
        }
    }

    let (examples, stats) = prepare_examples(&raw, mode);
    if let Some(cp) = &cache_path {
        if let Some(dir) = cp.parent() {
            fs::create_dir_all(dir).map_err(|source| DataError::io(dir, source))?;
        }
        write_cache(cp, &key, &examples, &stats)?;
    }
    Ok(PreparedCorpus {
        raw,
        examples,
        stats,
        from_cache: false,
    })
}

fn read_cache(path: &Path, key: &str) -> Option<(Vec<TokenizedExample>, PrepStats)> {
    let text = fs::read_to_string(path).ok()?;
    let file: CacheFile = match serde_json::from_str(&text) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("ignoring unreadable cache {}: {e}", path.display());
            return None;
        }
    };
    if file.key != key {
        return None;
    }
    let passages: Vec<Arc<TokenizedPassage>> = file
        .passages
        .into_iter()
        .map(|mut p| {
            p.rebuild_index();
            Arc::new(p)
        })
        .collect();
    let examples = file
        .examples
        .into_iter()
        .map(|e| {
            Some(TokenizedExample {
                id: e.id,
                passage: Arc::clone(passages.get(e.passage)?),
                question: e.question,
                gold_spans: e.gold_spans,
                gold_texts: e.gold_texts,
            })
        })
        .collect::<Option<Vec<_>>>()?;
    Some((examples, file.stats))
}

fn write_cache(
    path: &Path,
    key: &str,
    examples: &[TokenizedExample],
    stats: &PrepStats,
) -> Result<(), DataError> {
    let mut index: HashMap<*const TokenizedPassage, usize> = HashMap::new();
    let mut passages = Vec::new();
    let mut cached = Vec::with_capacity(examples.len());
    for ex in examples {
        let slot = *index.entry(Arc::as_ptr(&ex.passage)).or_insert_with(|| {
            passages.push(ex.passage.as_ref().clone());
            passages.len() - 1
        });
        cached.push(CachedExample {
            id: ex.id.clone(),
            passage: slot,
            question: ex.question.clone(),
            gold_spans: ex.gold_spans.clone(),
            gold_texts: ex.gold_texts.clone(),
        });
    }
    let file = CacheFile {
        key: key.to_owned(),
        passages,
        examples: cached,
        stats: stats.clone(),
    };
    let json = serde_json::to_vec(&file).expect("cache is serializable");
    fs::write(path, json).map_err(|source| DataError::io(path, source))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUAD: &str = r#"{"data": [{"paragraphs": [{
        "context": "Tesla moved to Karlovac, to attend school.",
        "qas": [{"id": "a", "question": "Where did Tesla move?", "answers": [{"text": "Karlovac", "answer_start": 15}]},
                {"id": "b", "question": "Why?", "answers": [{"text": "to attend school", "answer_start": 25}]}]}]}]}"#;

    #[test]
    fn second_load_hits_cache_with_identical_output() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("train.json");
        fs::write(&input, SQUAD).unwrap();
        let cache = dir.path().join("cache");

        let first = load_or_prepare(&input, LoadMode::Train, Some(&cache)).unwrap();
        assert!(!first.from_cache);
        let second = load_or_prepare(&input, LoadMode::Train, Some(&cache)).unwrap();
        assert!(second.from_cache);
        assert_eq!(first.examples, second.examples);
        assert!(Arc::ptr_eq(&second.examples[0].passage, &second.examples[1].passage));
        assert_eq!(
            second.examples[1]
                .passage
                .span_text(second.examples[1].gold_spans[0].0, second.examples[1].gold_spans[0].1)
                .unwrap(),
            "to attend school"
        );

        // Different mode -> different key.
        let eval = load_or_prepare(&input, LoadMode::Eval, Some(&cache)).unwrap();
        assert!(!eval.from_cache);
    }

    #[test]
    fn key_depends_on_content() {
        assert_ne!(
            cache_key(b"a", LoadMode::Train),
            cache_key(b"b", LoadMode::Train)
        );
        assert_eq!(cache_key(b"a", LoadMode::Eval), cache_key(b"a", LoadMode::Eval));
    }
}
