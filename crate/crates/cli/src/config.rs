//! TOML run configuration. Every key is optional; command-line flags win.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub rank: RankConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub scrape: ScrapeConfig,
    #[serde(default)]
    pub serve: ServeConfig,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub feed_dir: Option<PathBuf>,
    pub snapshot_dir: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub embedding_store: Option<PathBuf>,
    pub journal: Option<PathBuf>,
    pub feedback_log: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankConfig {
    pub ranker: Option<String>,
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub aggregation: Option<String>,
    pub scorer_url: Option<String>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Option<Vec<usize>>,
    pub preproc: Option<bool>,
    pub chains: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: Option<u64>,
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScrapeConfig {
    pub requests_per_second: Option<f64>,
    pub first_year: Option<u16>,
    pub last_year: Option<u16>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: Option<String>,
    pub annotators: Option<Vec<String>>,
    pub assist: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))
            .context("reading configuration")?;
        Ok(config)
    }
}

/// Flag value if given, else the configured one.
pub fn pick<T: Clone>(flag: &Option<T>, configured: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| configured.clone())
}

/// Requires a path from flag or config, naming the flag when missing.
pub fn require_path(
    flag: &Option<PathBuf>,
    configured: &Option<PathBuf>,
    name: &str,
) -> anyhow::Result<PathBuf> {
    pick(flag, configured)
        .ok_or_else(|| UsageError(format!("--{name} is required (or set it in the config)")).into())
}

/// Fails before any work starts if an input is missing.
pub fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> anyhow::Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(UsageError(format!("input {} does not exist", p.display())).into());
        }
    }
    Ok(())
}
