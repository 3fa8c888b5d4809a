//! Flat TOML configuration. Every key mirrors a command-line flag; flags
//! given on the command line win. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub cache: Option<PathBuf>,
    pub concurrency: Option<usize>,
    pub llm: Option<String>,
    pub nli: Option<String>,
    pub topics: Option<PathBuf>,
    pub passages: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub gold_responses: Option<PathBuf>,
    pub gold_human: Option<PathBuf>,
    pub gold_human_dedup: Option<PathBuf>,
    pub gold_llm: Option<PathBuf>,
    pub gold_llm_dedup: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub matching: Option<String>,
    pub strict_spans: Option<bool>,
    pub min_grade: Option<u8>,
    pub gain: Option<String>,
    pub rel_threshold: Option<u8>,
    pub tau: Option<String>,
    pub top_k: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.cache,
            &mut cfg.topics,
            &mut cfg.passages,
            &mut cfg.qrels,
            &mut cfg.gold_responses,
            &mut cfg.gold_human,
            &mut cfg.gold_human_dedup,
            &mut cfg.gold_llm,
            &mut cfg.gold_llm_dedup,
            &mut cfg.baseline,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "topics = \"t.json\"\nconcurrency = 3\nllm = \"mock\"\n").unwrap();
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.topics.unwrap(), dir.path().join("t.json"));
        assert_eq!(cfg.concurrency, Some(3));
        std::fs::write(&path, "bogus = 1\n").unwrap();
        assert!(Config::load(&path).is_err());
    }
}
