use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::agent_loop::{fingerprint, Budget, EpisodeConfig};
use crate::data_pipeline::FilterThresholds;
use crate::entity_gain::GainConfig;
use crate::ground_truth::AdmissionConfig;
use crate::loc_metrics::RewardConfig;
use crate::repo_tools::ToolLimits;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSettings {
    /// Replays `<script_dir>/<instance_id>.json`, or
    /// `<instance_id>.<run>.json` when present.
    Scripted { script_dir: PathBuf },
    /// Chat-completion endpoint; unset fields fall back to the environment.
    Http {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        temperature: Option<f64>,
        #[serde(default)]
        timeout_seconds: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub dataset_path: PathBuf,
    pub repo_store_path: PathBuf,
    pub driver: DriverSettings,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub thresholds: FilterThresholds,
    #[serde(default)]
    pub gain: GainConfig,
    #[serde(default)]
    pub limits: ToolLimits,
    #[serde(default)]
    pub admission: AdmissionConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_runs")]
    pub runs_per_instance: usize,
    /// Deterministic timestamps for reproducible reports.
    #[serde(default)]
    pub fixed_clock: bool,
}

fn default_parallelism() -> usize {
    1
}

fn default_runs() -> usize {
    3
}

impl BenchmarkConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, BenchError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.dataset_path = base_dir.join(&cfg.dataset_path);
        cfg.repo_store_path = base_dir.join(&cfg.repo_store_path);
        if let DriverSettings::Scripted { script_dir } = &mut cfg.driver {
            *script_dir = base_dir.join(&*script_dir);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.runs_per_instance == 0 {
            return Err(BenchError::Config("runs_per_instance must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(BenchError::Config("parallelism must be at least 1".into()));
        }
        if self.gain.chunk_size == 0 {
            return Err(BenchError::Config("chunk_size must be at least 1".into()));
        }
        self.reward.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.thresholds.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        for (name, path) in [("dataset_path", &self.dataset_path), ("repo_store_path", &self.repo_store_path)] {
            if !path.exists() {
                return Err(BenchError::Config(format!("{name} {} does not exist", path.display())));
            }
        }
        if let DriverSettings::Scripted { script_dir } = &self.driver {
            if !script_dir.is_dir() {
                return Err(BenchError::Config(format!("script_dir {} is not a directory", script_dir.display())));
            }
        }
        Ok(())
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig { gain: self.gain, limits: self.limits.clone(), budget: self.budget.clone() }
    }

    /// Hash of every scoring and episode knob; paths and parallelism are
    /// excluded because they do not change row contents.
    pub fn fingerprint(&self) -> String {
        fingerprint(&serde_json::json!({
            "episode": self.episode_config(),
            "reward": self.reward,
            "thresholds": self.thresholds,
            "admission": self.admission,
            "runs_per_instance": self.runs_per_instance,
        }))
    }
}
