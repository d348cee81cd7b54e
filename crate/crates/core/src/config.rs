//! Run configuration shared by the CLI, the experiment runner and the tests.

use serde::{Deserialize, Serialize};

use crate::cpar::{Floors, UpdateMode};
use crate::error::{Result, SynthError};

/// Hyperparameters and protocol knobs. Defaults follow the reference
/// protocol: 128 epochs and one synthetic sequence per real sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub epochs: usize,
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Length cap for sampled sequences; `None` means four times the longest
    /// real sequence.
    pub max_sequence_length: Option<usize>,
    /// Number of sequences to sample; `None` means the real sequence count.
    pub sample_count: Option<usize>,
    pub msas_lag_max: usize,
    /// `epoch`: one optimizer update over the summed loss per epoch.
    /// `sequence`: one update per sequence.
    pub update_mode: UpdateMode,
    pub grad_clip: f64,
    pub floors: Floors,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epochs: 128,
            hidden_size: 64,
            learning_rate: 1e-3,
            seed: 42,
            max_sequence_length: None,
            sample_count: None,
            msas_lag_max: 25,
            update_mode: UpdateMode::Epoch,
            grad_clip: 10.0,
            floors: Floors::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("hidden_size", self.hidden_size as f64),
            ("learning_rate", self.learning_rate),
            ("msas_lag_max", self.msas_lag_max as f64),
            ("grad_clip", self.grad_clip),
            ("floors.sigma", self.floors.sigma),
            ("floors.r", self.floors.r),
            ("floors.prob", self.floors.prob),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(SynthError::InvalidConfig(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if let Some(cap) = self.max_sequence_length {
            if cap == 0 {
                return Err(SynthError::InvalidConfig(
                    "max_sequence_length must be positive".into(),
                ));
            }
        }
        if self.floors.prob >= 0.5 {
            return Err(SynthError::InvalidConfig(
                "floors.prob must be below 0.5".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_protocol() {
        let config = RunConfig::default();
        assert_eq!(config.epochs, 128);
        assert!(config.sample_count.is_none());
        assert!(config.check().is_ok());
    }

    #[test]
    fn partial_json_overrides_defaults() {
        let config = RunConfig::from_json(r#"{"epochs": 16, "seed": 7}"#).unwrap();
        assert_eq!(config.epochs, 16);
        assert_eq!(config.seed, 7);
        assert_eq!(config.hidden_size, 64);
    }

    #[test]
    fn non_positive_values_are_rejected() {
        assert!(RunConfig::from_json(r#"{"epochs": 0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"learning_rate": -0.5}"#).is_err());
    }
}
