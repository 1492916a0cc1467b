use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run, kept in its output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every setting after flags, config file and defaults are merged.
    pub config: serde_json::Value,
    pub seed: u64,
    pub git_describe: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub artifacts: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// `git describe --always --dirty` of the working directory, or "unknown".
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

impl RunManifest {
    pub fn begin(command: &str, config: &impl Serialize, seed: u64) -> Self {
        Self {
            command: command.into(),
            config: serde_json::to_value(config).expect("settings serialize"),
            seed,
            git_describe: git_describe(),
            started_at: now(),
            finished_at: None,
            artifacts: Vec::new(),
        }
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let path = Self::path(dir);
        let json = serde_json::to_string_pretty(self).expect("manifest serialize");
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }

    pub fn finish(&mut self, dir: &Path) -> anyhow::Result<()> {
        self.finished_at = Some(now());
        self.artifacts.sort();
        self.artifacts.dedup();
        self.write(dir)
    }

    pub fn read(dir: &Path) -> anyhow::Result<Self> {
        let path = Self::path(dir);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_finish() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::begin("train", &serde_json::json!({"seed": 3}), 3);
        m.write(dir.path()).unwrap();
        assert!(RunManifest::read(dir.path()).unwrap().finished_at.is_none());
        m.artifacts = vec!["b".into(), "a".into(), "b".into()];
        m.finish(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back.artifacts, vec!["a", "b"]);
        assert!(back.finished_at.is_some());
        assert_eq!(back.config["seed"], 3);
    }
}
