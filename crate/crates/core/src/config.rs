//! Runtime configuration: a JSON file overlaid with `VSA_*` environment
//! variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineConfig;
use crate::library::DEFAULT_THRESHOLD;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{var}={value}: {reason}")]
    Env { var: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    pub port: u16,
    pub threshold: f64,
    pub template_threshold: f64,
    pub retry_budget: usize,
    pub escalation_timeout: u64,
    pub max_escalations: usize,
    pub library: Option<PathBuf>,
    pub parallel: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            host: "127.0.0.1".into(),
            port: 8080,
            threshold: DEFAULT_THRESHOLD,
            template_threshold: 0.0,
            retry_budget: 3,
            escalation_timeout: 300,
            max_escalations: 2,
            library: None,
            parallel: true,
        }
    }
}

fn env_value<T: std::str::FromStr>(var: &str, value: String) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Env { var: var.into(), value, reason: e.to_string() })
}

impl Config {
    /// Reads `path` if given, otherwise starts from the defaults.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let config = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.into(), source })?;
                serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: p.into(), source })?
            }
        };
        config.check()?;
        Ok(config)
    }

    /// Applies overrides from the process environment.
    pub fn with_env(self) -> Result<Config, ConfigError> {
        self.with_lookup(|k| std::env::var(k).ok())
    }

    pub fn with_lookup(mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Config, ConfigError> {
        if let Some(v) = lookup("VSA_HOST") {
            self.host = v;
        }
        if let Some(v) = lookup("VSA_PORT") {
            self.port = env_value("VSA_PORT", v)?;
        }
        if let Some(v) = lookup("VSA_THRESHOLD") {
            self.threshold = env_value("VSA_THRESHOLD", v)?;
        }
        if let Some(v) = lookup("VSA_ESCALATION_TIMEOUT") {
            self.escalation_timeout = env_value("VSA_ESCALATION_TIMEOUT", v)?;
        }
        if let Some(v) = lookup("VSA_RETRY_BUDGET") {
            self.retry_budget = env_value("VSA_RETRY_BUDGET", v)?;
        }
        if let Some(v) = lookup("VSA_LIBRARY") {
            self.library = Some(PathBuf::from(v));
        }
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), ConfigError> {
        for (name, v) in [("threshold", self.threshold), ("template_threshold", self.template_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            threshold: self.threshold,
            retry_budget: self.retry_budget,
            escalation_timeout: self.escalation_timeout,
            max_escalations: self.max_escalations,
            ..EngineConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_overrides_file_values() {
        let vars = HashMap::from([("VSA_PORT", "9000"), ("VSA_THRESHOLD", "0.75")]);
        let c = Config::default().with_lookup(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.threshold, 0.75);
        assert_eq!(c.engine_config().threshold, 0.75);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = Config::default().with_lookup(|k| (k == "VSA_PORT").then(|| "x".into()));
        assert!(matches!(bad, Err(ConfigError::Env { .. })));
        let out = Config::default().with_lookup(|k| (k == "VSA_THRESHOLD").then(|| "1.5".into()));
        assert!(matches!(out, Err(ConfigError::Invalid(_))));
    }
}
