//! Declarative experiment configuration (TOML).

use serde::{Deserialize, Serialize};

use crate::gateway::{RemoteConfig, SimulatorProfile};

use super::HarnessError;

/// A full experiment: dataset, strategy, backend, trial protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub run_seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Worker count. Defaults to 4 for simulated backends; remote backends
    /// must set it explicitly (rate limits vary by provider).
    #[serde(default)]
    pub concurrency_limit: Option<usize>,
    pub dataset: DatasetConfig,
    pub strategy: StrategyConfig,
    pub backend: BackendConfig,
    /// External translation scorer; exact reference match when absent.
    #[serde(default)]
    pub scorer: Option<crate::eval::ScorerConfig>,
}

fn default_trials() -> u32 {
    10
}

/// Where tasks come from: a file in one of the supported formats, or a
/// synthetic set generated from the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// "file" | "synthetic-math" | "synthetic-translation"
    pub source: String,
    #[serde(default)]
    pub path: Option<String>,
    /// "gsm8k-jsonl" | "svamp-json" | "pairs-tsv" (file source only)
    #[serde(default)]
    pub format: Option<String>,
    /// Task count (synthetic source only).
    #[serde(default = "default_dataset_size")]
    pub size: usize,
}

fn default_dataset_size() -> usize {
    100
}

/// Strategy selection plus its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// cot | self-reflection | sc-vote | sc-select | sc-reflect | self-contrast
    pub name: String,
    /// Pipeline mode for self-contrast.
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Representatives kept after selection.
    #[serde(default = "default_k")]
    pub k: usize,
    /// K for the self-consistency family; n for the top-n pipeline modes.
    #[serde(default = "default_sample_n")]
    pub sample_n: u32,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    /// medoid | random | cluster-random | cluster-llm | cluster-negative
    #[serde(default = "default_selection")]
    pub selection: String,
    #[serde(default)]
    pub negative_perspective: bool,
}

fn default_mode() -> String {
    "full".into()
}
fn default_k() -> usize {
    3
}
fn default_sample_n() -> u32 {
    8
}
fn default_max_rounds() -> u32 {
    2
}
fn default_selection() -> String {
    "medoid".into()
}

/// Completion backend selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    /// "simulated" | "remote"
    pub kind: BackendKindConfig,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Completion cache file directory; SELFCONTRAST_CACHE_DIR overrides.
    #[serde(default)]
    pub cache_dir: Option<String>,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
    #[serde(default)]
    pub profile: Option<SimulatorProfile>,
}

fn default_temperature() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKindConfig {
    Simulated,
    Remote,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self =
            toml::from_str(text).map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.experiment_id.trim().is_empty() {
            return Err(HarnessError::ConfigInvalid("experiment_id is empty".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::ConfigInvalid("trials must be >= 1".into()));
        }
        match self.concurrency_limit {
            Some(0) => {
                return Err(HarnessError::ConfigInvalid(
                    "concurrency_limit must be >= 1".into(),
                ))
            }
            None if self.backend.kind == BackendKindConfig::Remote => {
                return Err(HarnessError::ConfigInvalid(
                    "remote backends require an explicit concurrency_limit".into(),
                ))
            }
            _ => {}
        }
        match self.dataset.source.as_str() {
            "file" => {
                if self.dataset.path.is_none() || self.dataset.format.is_none() {
                    return Err(HarnessError::ConfigInvalid(
                        "file datasets need path and format".into(),
                    ));
                }
            }
            "synthetic-math" | "synthetic-translation" => {
                if self.dataset.size == 0 {
                    return Err(HarnessError::ConfigInvalid(
                        "synthetic datasets need size >= 1".into(),
                    ));
                }
            }
            other => {
                return Err(HarnessError::ConfigInvalid(format!(
                    "unknown dataset source: {other}"
                )))
            }
        }
        let known_strategy = [
            "cot",
            "self-reflection",
            "sc-vote",
            "sc-select",
            "sc-reflect",
            "self-contrast",
        ];
        if !known_strategy.contains(&self.strategy.name.as_str()) {
            return Err(HarnessError::ConfigInvalid(format!(
                "unknown strategy: {}",
                self.strategy.name
            )));
        }
        match self.backend.kind {
            BackendKindConfig::Simulated => {
                let profile = self.backend.profile.as_ref().ok_or_else(|| {
                    HarnessError::ConfigInvalid("simulated backend needs a profile".into())
                })?;
                profile
                    .validate()
                    .map_err(|e| HarnessError::ConfigInvalid(e.to_string()))?;
            }
            BackendKindConfig::Remote => {
                if self.backend.remote.is_none() {
                    return Err(HarnessError::ConfigInvalid(
                        "remote backend needs [backend.remote]".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn effective_concurrency(&self) -> usize {
        self.concurrency_limit.unwrap_or(4)
    }

    pub fn model_id(&self) -> String {
        self.backend
            .model_id
            .clone()
            .unwrap_or_else(|| match self.backend.kind {
                BackendKindConfig::Simulated => "simulated-solver".into(),
                BackendKindConfig::Remote => self
                    .backend
                    .remote
                    .as_ref()
                    .map(|r| r.model.clone())
                    .unwrap_or_default(),
            })
    }

    /// Cache file path: explicit config dir, or SELFCONTRAST_CACHE_DIR.
    pub fn cache_path(&self) -> Option<std::path::PathBuf> {
        let dir = std::env::var("SELFCONTRAST_CACHE_DIR")
            .ok()
            .or_else(|| self.backend.cache_dir.clone())?;
        Some(std::path::PathBuf::from(dir).join(format!("{}.cache.jsonl", self.experiment_id)))
    }
}
