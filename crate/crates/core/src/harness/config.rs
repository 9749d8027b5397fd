use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{CostWeights, EnvConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::sac::{CoreType, TrainerConfig};
use crate::uncertainty::UncertaintyConfig;

/// Everything one run needs, as read from a single JSON file. Missing keys
/// take their defaults and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub weights: CostWeights,
    pub uncertainty: UncertaintyConfig,
    pub trainer: TrainerConfig,
    pub core_type: CoreType,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            weights: CostWeights::default(),
            uncertainty: UncertaintyConfig::default(),
            trainer: TrainerConfig::default(),
            core_type: CoreType::Gru,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Errors name the path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Pretty JSON with every default filled in.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate()?;
        self.trainer.validate()
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { scenario: self.scenario.clone(), weights: self.weights.clone(), uncertainty: self.uncertainty.clone() }
    }
}
