//! Run configuration: one JSON file with optional `executor`, `reward`,
//! `policy` and `train` sections layered over a base profile.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::executor::ExecutorConfig;
use crate::policy::PolicyConfig;
use crate::reward::RewardConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub executor: ExecutorConfig,
    pub reward: RewardConfig,
    pub policy: PolicyConfig,
    pub train: TrainConfig,
}

/// Which defaults a config file is layered over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Hyperparameters as published.
    Paper,
    /// Rates and epochs sized for a few hundred synthetic questions.
    #[default]
    Desk,
}

impl Config {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Paper => Self::default(),
            Profile::Desk => Self {
                train: TrainConfig::desk(),
                ..Self::default()
            },
        }
    }

    /// Overrides the fields present in `overrides` and validates the result.
    pub fn layered(base: &Config, overrides: Value) -> Result<Self, ConfigError> {
        let mut merged = serde_json::to_value(base).expect("config serializes");
        merge(&mut merged, overrides);
        let cfg: Config =
            serde_json::from_value(merged).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &Config) -> Result<Self, ConfigError> {
        let read_err = |message: String| ConfigError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        if !value.is_object() {
            return Err(read_err("expected a JSON object".into()));
        }
        Self::layered(base, value)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.reward.validate().map_err(ConfigError::Invalid)?;
        self.train.validate().map_err(ConfigError::Invalid)?;
        let p = &self.policy;
        if p.d_e == 0 || p.d_q == 0 || p.d_q % 2 != 0 {
            return Err(ConfigError::Invalid(
                "policy.d_e must be positive and policy.d_q a positive even number".into(),
            ));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn partial_file_keeps_profile_values() {
        let base = Config::profile(Profile::Desk);
        let cfg = Config::layered(&base, json!({"train": {"k": 7}, "reward": {"alpha": 0.2}}))
            .unwrap();
        assert_eq!(cfg.train.k, 7);
        assert_eq!(cfg.train.rl_lr, TrainConfig::desk().rl_lr);
        assert_eq!(cfg.reward.alpha, 0.2);
        assert_eq!(cfg.executor, ExecutorConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = Config::default();
        assert!(Config::layered(&base, json!({"trian": {}})).is_err());
        assert!(Config::layered(&base, json!({"train": {"kk": 1}})).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = Config::default();
        assert!(Config::layered(&base, json!({"train": {"k": 0}})).is_err());
        assert!(Config::layered(&base, json!({"policy": {"d_q": 7}})).is_err());
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"executor": {"comparison_strict": true}}"#).unwrap();
        let cfg = Config::load(&path, &Config::default()).unwrap();
        assert!(cfg.executor.comparison_strict);
        std::fs::write(&path, "[1]").unwrap();
        assert!(Config::load(&path, &Config::default()).is_err());
        assert!(Config::load(&dir.path().join("none.json"), &Config::default()).is_err());
    }
}
