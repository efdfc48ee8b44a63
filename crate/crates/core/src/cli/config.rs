//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Result, RpoError};
use crate::experiments::{TaskConfig, WorldConfig};
use crate::training::{AdaptConfig, PretrainConfig};

/// Environment variable that replaces the default run-directory root.
pub const RUN_ROOT_ENV: &str = "RPO_RUN_ROOT";
pub const DEFAULT_RUN_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub seeds: Vec<u64>,
    pub shots: Vec<usize>,
    /// Prompt count for the variance study.
    pub variance_k: usize,
    /// Flips every directional expectation; used to exercise the
    /// `--strict` failure path.
    pub invert_checks: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            seeds: (1..=10).collect(),
            shots: vec![1, 2, 4, 8, 16],
            variance_k: 4,
            invert_checks: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub backbone: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a command needs. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds pre-training, task sampling and adaptation.
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub world: WorldConfig,
    pub pretrain: PretrainConfig,
    pub task: TaskConfig,
    pub adapt: AdaptConfig,
    pub study: StudyConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            encoder: EncoderConfig::default(),
            world: WorldConfig::default(),
            pretrain: PretrainConfig::default(),
            task: TaskConfig::default(),
            adapt: AdaptConfig::default(),
            study: StudyConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RpoError::config(e.to_string()))
    }

    /// Reads and parses `path`, returning the config and its verbatim
    /// text.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RpoError::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = toml::from_str(&text)
            .map_err(|e| RpoError::config(format!("{}: {e}", path.display())))?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Pushes the global seed into every section that carries one.
    pub fn apply_seed(&mut self) {
        self.pretrain.seed = self.seed;
        self.adapt.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.pretrain.validate()?;
        self.adapt.validate()?;
        if self.task.num_classes < 2 || self.task.shots == 0 || self.task.test_per_class == 0 {
            return Err(RpoError::config("task needs ≥ 2 classes, ≥ 1 shot and ≥ 1 test image"));
        }
        if self.study.seeds.is_empty() || self.study.shots.contains(&0) {
            return Err(RpoError::config("study needs seeds and positive shot counts"));
        }
        if self.study.variance_k == 0 {
            return Err(RpoError::config("study.variance_k must be at least 1"));
        }
        Ok(())
    }
}

/// Root under which run directories are created.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_ROOT))
}
