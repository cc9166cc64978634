//! Run configuration: one TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use rewardsmith_core::eval::EvalConfig;
use rewardsmith_core::tasks::{generate_dataset_with, ingest_dataset, DatasetError, DEFAULT_THREE_OPERAND_SHARE};
use rewardsmith_core::{Dataset, GrpoConfig, Split};
use rewardsmith_lang::SandboxLimits;
use rewardsmith_search::{EnsembleConfig, SearchConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub three_operand_share: f64,
    /// JSONL files with `question` and `answer`; both must be set to ingest.
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 3407,
            n_train: 7473,
            n_test: 1319,
            three_operand_share: DEFAULT_THREE_OPERAND_SHARE,
            train_path: None,
            test_path: None,
        }
    }
}

impl DatasetConfig {
    pub fn load(&self) -> Result<(Dataset, Dataset), DatasetError> {
        match (&self.train_path, &self.test_path) {
            (Some(tr), Some(te)) => Ok((ingest_dataset(tr, Split::Train)?, ingest_dataset(te, Split::Test)?)),
            _ => Ok(generate_dataset_with(self.seed, self.n_train, self.n_test, self.three_operand_share)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub grpo: GrpoConfig,
    pub eval: EvalConfig,
    pub search: SearchConfig,
    pub sandbox: SandboxLimits,
    pub ensembles: Vec<EnsembleConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("rewardsmith-out"),
            dataset: DatasetConfig::default(),
            grpo: GrpoConfig::default(),
            eval: EvalConfig::default(),
            search: SearchConfig::default(),
            sandbox: SandboxLimits::default(),
            ensembles: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut unknown = Vec::new();
        let cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(ConfigError::UnknownKeys(unknown));
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::parse(&text)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let g = &self.grpo;
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if g.group_size < 2 {
            return bad("grpo.group_size must be at least 2");
        }
        if !(g.clip_eps > 0.0 && g.clip_eps < 1.0) {
            return bad("grpo.clip_eps must lie in (0, 1)");
        }
        if !(g.kl_beta >= 0.0) {
            return bad("grpo.kl_beta must be non-negative");
        }
        if !(0.0..1.0).contains(&g.warmup_ratio) {
            return bad("grpo.warmup_ratio must lie in [0, 1)");
        }
        self.search.check().map_err(ConfigError::Invalid)?;
        let mut names: Vec<&str> = self.ensembles.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("ensemble names must be unique");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.grpo.seed = s;
            self.search.seed = s;
        }
        self
    }
}
