//! TOML run configuration shared by every subcommand.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use contrnp::data::{CsvSchema, SynthConfig};
use contrnp::eval::EvalConfig;
use contrnp::TrainConfig;

/// How CSV input is turned into segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Number of value columns; inferred from the header when absent.
    pub channels: Option<usize>,
    /// Channel-wise z-score over the whole series after loading.
    pub normalize: bool,
    /// Additional z-score within each window.
    pub window_normalize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            channels: None,
            normalize: true,
            window_normalize: false,
        }
    }
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            channels: self.channels,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub data: DataConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Parse a config file; unknown keys are rejected and errors carry the
    /// offending key and line.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
