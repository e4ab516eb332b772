//! JSON run configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::nda::NdaConfig;
use crate::tails::TailSamplerConfig;
use crate::trainer::TrainConfig;

/// Every tunable of a run. Missing keys take their defaults; unknown keys are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub nda: NdaConfig,
    pub tails: TailSamplerConfig,
    pub synthetic: SyntheticSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.nda.validate()?;
        self.tails.validate()?;
        self.synthetic.validate()
    }

    /// Settings for the synthetic benchmark: defaults except batch size 16,
    /// since 1,800 training vectors at 128 give only 15 steps per epoch.
    pub fn desk_benchmark() -> Self {
        let mut cfg = Self::default();
        cfg.train.batch_size = 16;
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    RunConfig::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips() {
        let mut cfg = RunConfig::default();
        cfg.train.alpha = 0.25;
        cfg.nda.jigsaw_grid = 2;
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json(r#"{"train": {"alpha": 0.1, "gamma": 1}}"#).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("gamma")), "{err}");
        let err = RunConfig::from_json(r#"{"train": {"m_id": 0, "m_ood": -1}}"#).unwrap_err();
        assert!(err.to_string().contains("train.m_id"), "{err}");
    }
}
