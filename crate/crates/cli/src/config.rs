use std::path::Path;

use primo_core::dmp::FitOptions;
use primo_core::ingest::PreprocessConfig;
use primo_core::LearnOptions;
use serde::Deserialize;

/// Defaults read from the TOML file named by `--config` or `PRIMO_CONFIG`.
/// Command-line flags win over anything set here.
///
/// ```toml
/// seed = 7
///
/// [preprocess]
/// smooth_window = 15
///
/// [fit]
/// n_basis = 50
///
/// [learn]
/// min_relative_rate = 0.3
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub preprocess: PreprocessConfig,
    pub fit: FitOptions,
    pub learn: LearnOptions,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}
