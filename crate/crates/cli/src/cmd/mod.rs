pub mod attention;
pub mod evaluate;
pub mod gradcheck;
pub mod predict;
pub mod train;

use std::path::Path;

use anyhow::Context as _;
use matchlstm::data::{load_or_prepare, LoadMode, PreparedCorpus};
use serde::{Deserialize, Serialize};

use crate::Usage;

/// Float width for training and decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

pub fn ensure_exists(path: &Path, what: &str) -> Result<(), Usage> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Usage(format!("{what} {} does not exist", path.display())))
    }
}

pub fn load_corpus(path: &Path, mode: LoadMode, cache: Option<&Path>) -> anyhow::Result<PreparedCorpus> {
    ensure_exists(path, "data file")?;
    let c = load_or_prepare(path, mode, cache).with_context(|| format!("loading {}", path.display()))?;
    log::info!(
        "{}: {} questions, {} dropped{}",
        path.display(),
        c.examples.len(),
        c.stats.dropped,
        if c.from_cache { " (cached)" } else { "" }
    );
    Ok(c)
}
