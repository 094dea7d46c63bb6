use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgc_core::{ExtractionConfig, ModelConfig, ScenarioConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Pixel-to-ground calibration used when records carry pixel positions.
    pub calibration: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            calibration: None,
            out_dir: PathBuf::from("runs/latest"),
        }
    }
}

/// Everything a run needs, loaded from TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub extraction: ExtractionConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// A single seed drives generation, fold assignment and initialization.
    pub fn set_seed(&mut self, seed: u64) {
        self.scenario.seed = seed;
        self.train.seed = seed;
    }
}
