//! Service configuration: one TOML file, then `MLAUDIT_*` environment
//! overrides. Every field has a default, so an empty file is valid.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mlaudit_core::monitoring::{DEFAULT_MIN_GROUP_SIZE, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub store: PathBuf,
    pub bind: String,
    /// Shared bearer token. No token means no authentication.
    pub token: Option<String>,
    /// Concurrent monitor jobs.
    pub workers: usize,
    pub thresholds: Thresholds,
}

/// Defaults applied to monitor specs that leave these out.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub fairness: f64,
    pub min_group_size: u32,
    pub error_rate: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { fairness: DEFAULT_THRESHOLD, min_group_size: DEFAULT_MIN_GROUP_SIZE, error_rate: 0.1 }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self { store: PathBuf::from("mlaudit-store"), bind: "127.0.0.1:8080".into(), token: None, workers: 2, thresholds: Thresholds::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("environment variable {name}: {problem}")]
    Env { name: &'static str, problem: String },
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_owned(), source: Box::new(e) })
    }

    /// Reads `path` if given (a missing explicit file is an error), then
    /// applies overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_owned(), source })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        config.apply_env(env)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_process_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, |k| std::env::var(k).ok())
    }

    fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(name: &'static str, v: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.trim().parse().map_err(|e: T::Err| ConfigError::Env { name, problem: e.to_string() })
        }
        if let Some(v) = env("MLAUDIT_STORE") {
            self.store = PathBuf::from(v);
        }
        if let Some(v) = env("MLAUDIT_BIND") {
            self.bind = v;
        }
        if let Some(v) = env("MLAUDIT_TOKEN") {
            self.token = (!v.is_empty()).then_some(v);
        }
        if let Some(v) = env("MLAUDIT_WORKERS") {
            self.workers = parsed("MLAUDIT_WORKERS", v)?;
        }
        if let Some(v) = env("MLAUDIT_FAIRNESS_THRESHOLD") {
            self.thresholds.fairness = parsed("MLAUDIT_FAIRNESS_THRESHOLD", v)?;
        }
        if let Some(v) = env("MLAUDIT_MIN_GROUP_SIZE") {
            self.thresholds.min_group_size = parsed("MLAUDIT_MIN_GROUP_SIZE", v)?;
        }
        if let Some(v) = env("MLAUDIT_ERROR_RATE_THRESHOLD") {
            self.thresholds.error_rate = parsed("MLAUDIT_ERROR_RATE_THRESHOLD", v)?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        for (name, t) in [("fairness", self.thresholds.fairness), ("error_rate", self.thresholds.error_rate)] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(ConfigError::Invalid(format!("thresholds.{name} = {t} is outside (0, 1]")));
            }
        }
        if self.thresholds.min_group_size == 0 {
            return Err(ConfigError::Invalid("thresholds.min_group_size must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn file_then_environment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mlaudit.toml");
        std::fs::write(&path, "store = \"/data\"\ntoken = \"abc\"\n[thresholds]\nfairness = 0.9\n").unwrap();
        let c = Config::load(Some(&path), env(&[("MLAUDIT_BIND", "0.0.0.0:9000"), ("MLAUDIT_MIN_GROUP_SIZE", "25")])).unwrap();
        assert_eq!(c.store, PathBuf::from("/data"));
        assert_eq!(c.bind, "0.0.0.0:9000");
        assert_eq!(c.token.as_deref(), Some("abc"));
        assert_eq!(c.thresholds.fairness, 0.9);
        assert_eq!(c.thresholds.min_group_size, 25);
        let c = Config::load(Some(&path), env(&[("MLAUDIT_TOKEN", "")])).unwrap();
        assert_eq!(c.token, None);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(matches!(Config::load(None, env(&[("MLAUDIT_WORKERS", "many")])), Err(ConfigError::Env { .. })));
        assert!(matches!(Config::load(None, env(&[("MLAUDIT_FAIRNESS_THRESHOLD", "1.5")])), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::from_toml("colour = 1", Path::new("x")), Err(ConfigError::Parse { .. })));
        assert!(matches!(Config::load(Some(Path::new("/nonexistent/x.toml")), env(&[])), Err(ConfigError::Read { .. })));
    }
}
