//! Run configuration: one strict JSON document covering model, data
//! synthesis and the training schedule. Unknown keys are rejected so a
//! config file fully describes an experiment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spotter::{SpotterConfig, TrainMode, TrainSchedule};
use crate::synth::SynthSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub spotter: SpotterConfig,
    pub synth: SynthSpec,
    pub schedule: TrainSchedule,
    pub mode: TrainMode,
    /// Number of images generated for gen-data and ablate runs.
    pub dataset_size: usize,
    /// Held-out images for eval/analyze when no explicit dataset is given.
    pub eval_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spotter: SpotterConfig::default(),
            synth: SynthSpec::default(),
            schedule: TrainSchedule::default(),
            mode: TrainMode::Joint,
            dataset_size: 2000,
            eval_size: 200,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let json = cfg.to_json();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.spotter.n_text, cfg.spotter.n_text);
        assert_eq!(back.dataset_size, cfg.dataset_size);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"dataset_size": 10}"#).unwrap();
        assert_eq!(cfg.dataset_size, 10);
        assert_eq!(cfg.spotter.n_rcp, 8);
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: Result<RunConfig, _> = serde_json::from_str(r#"{"dataset_sizes": 10}"#);
        assert!(r.is_err());
    }

    #[test]
    fn load_reports_missing_file() {
        assert!(matches!(
            RunConfig::load(Path::new("/nonexistent/config.json")),
            Err(ConfigError::Io(_))
        ));
    }
}
