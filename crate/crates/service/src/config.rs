use std::path::Path;

use gaitlens_core::model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::synth::SyntheticConfig;

/// Settings shared by all subcommands, loadable from a JSON file. Missing
/// sections and fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: SyntheticConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Fraction of patients held out for evaluation.
    pub holdout_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synthetic: SyntheticConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            holdout_fraction: 0.2,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            ServiceError::format(path, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let c = RunConfig::from_json(r#"{"train": {"epochs": 3}, "synthetic": {"legsPerClass": 4}}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.synthetic.legs_per_class, 4);
        assert_eq!(c.model, ModelConfig::default());
    }

    #[test]
    fn unknown_field_reports_path() {
        match RunConfig::from_json(r#"{"train": {"epochz": 3}}"#) {
            Err(ServiceError::Format { path, .. }) => assert!(path.starts_with("train"), "{path}"),
            other => panic!("{other:?}"),
        }
    }
}
