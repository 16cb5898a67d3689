//! Engine configuration: a TOML file plus `SCHEMAMEM_*` environment
//! overrides.
//!
//! ```toml
//! data_root = "/var/lib/schemamem"   # omit for an in-memory engine
//! listen = "127.0.0.1:7700"
//!
//! [adaptation]
//! theta_meta = 0.70
//! theta_elem = 0.60
//!
//! [scoring]
//! age_unit = "days"                  # or seconds as a number
//! support_scaling = "saturating"     # or "raw"
//! [scoring.weights]
//! recency = 0.3333333333333333
//! source = 0.3333333333333333
//! support = 0.3333333333333334
//!
//! [conflict]
//! time_tolerance_secs = 86400        # omit: timestamps never conflict
//! exempt_keys = ["close", "volume"]
//! [conflict.tolerances]
//! price = { absolute = 0.5 }
//!
//! [retrieval]
//! k = 5
//! budget = 8
//! min_score = 0.2
//!
//! [persistence]
//! sync = true
//! snapshot_every = 1000
//!
//! [provider]
//! rules = "rules.json"               # extraction rules for the lexical provider
//! command = ["my-provider", "--stdio"]  # external provider instead
//! ```
//!
//! `SCHEMAMEM_CONFIG` names the file. Single values are overridden by
//! `SCHEMAMEM_DATA_ROOT`, `SCHEMAMEM_LISTEN`, `SCHEMAMEM_THETA_META`,
//! `SCHEMAMEM_THETA_ELEM`, `SCHEMAMEM_W_RECENCY`, `SCHEMAMEM_W_SOURCE`,
//! `SCHEMAMEM_W_SUPPORT`, `SCHEMAMEM_AGE_UNIT`, `SCHEMAMEM_SUPPORT_SCALING`,
//! `SCHEMAMEM_TIME_TOLERANCE_SECS`, `SCHEMAMEM_K`, `SCHEMAMEM_BUDGET`,
//! `SCHEMAMEM_MIN_SCORE`, `SCHEMAMEM_SYNC`, `SCHEMAMEM_SNAPSHOT_EVERY` and
//! `SCHEMAMEM_RULES`. `SCHEMAMEM_LOG` sets the log filter. Any other
//! `SCHEMAMEM_*` variable is an error.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::AdaptationConfig;
use crate::conflict::{AgeUnit, ConflictPolicy, Scoring, SupportScaling, Tolerance};
use crate::retrieval::RetrievalConfig;
use crate::store::PersistOptions;

pub const CONFIG_ENV: &str = "SCHEMAMEM_CONFIG";
pub const LOG_ENV: &str = "SCHEMAMEM_LOG";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:7700";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unknown environment variable {0}")]
    UnknownEnv(String),
    #[error("{var}={value}: {reason}")]
    InvalidEnv { var: String, value: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// Extraction rules file (JSON) for the lexical provider.
    pub rules: Option<PathBuf>,
    /// Program and arguments of an external provider speaking the tool
    /// protocol on stdio.
    pub command: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersistenceConfig {
    pub sync: bool,
    pub snapshot_every: u64,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        let d = PersistOptions::default();
        PersistenceConfig {
            sync: d.sync,
            snapshot_every: d.snapshot_every,
        }
    }
}

impl From<PersistenceConfig> for PersistOptions {
    fn from(p: PersistenceConfig) -> Self {
        PersistOptions {
            sync: p.sync,
            snapshot_every: p.snapshot_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub data_root: Option<PathBuf>,
    pub listen: String,
    pub adaptation: AdaptationConfig,
    pub scoring: Scoring,
    pub conflict: ConflictPolicy,
    pub retrieval: RetrievalConfig,
    pub persistence: PersistenceConfig,
    pub provider: ProviderConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            data_root: None,
            listen: DEFAULT_LISTEN.to_string(),
            adaptation: AdaptationConfig::default(),
            scoring: Scoring::default(),
            conflict: ConflictPolicy::default(),
            retrieval: RetrievalConfig::default(),
            persistence: PersistenceConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

fn parse_env<T: FromStr>(var: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::InvalidEnv {
        var: var.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        // relative paths inside the file are relative to the file
        if let Some(dir) = path.parent() {
            for p in [config.data_root.as_mut(), config.provider.rules.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    /// File named by `explicit`, else by `SCHEMAMEM_CONFIG` in `env`, else
    /// defaults; then `SCHEMAMEM_*` overrides from `env`.
    pub fn load<I>(explicit: Option<&Path>, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with("SCHEMAMEM_")).collect();
        let file = explicit
            .map(Path::to_path_buf)
            .or_else(|| env.iter().find(|(k, _)| k == CONFIG_ENV).map(|(_, v)| PathBuf::from(v)));
        let mut config = match file {
            Some(path) => Self::from_file(&path)?,
            None => EngineConfig::default(),
        };
        config.apply_env(&env)?;
        config.validate()?;
        Ok(config)
    }

    /// [`EngineConfig::load`] over the process environment.
    pub fn from_env(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(explicit, std::env::vars())
    }

    fn apply_env(&mut self, env: &[(String, String)]) -> Result<(), ConfigError> {
        for (var, value) in env {
            let v = value.as_str();
            match var.as_str() {
                CONFIG_ENV | LOG_ENV => {}
                "SCHEMAMEM_DATA_ROOT" => self.data_root = Some(PathBuf::from(v)),
                "SCHEMAMEM_LISTEN" => self.listen = v.to_string(),
                "SCHEMAMEM_THETA_META" => self.adaptation.theta_meta = parse_env(var, v)?,
                "SCHEMAMEM_THETA_ELEM" => self.adaptation.theta_elem = parse_env(var, v)?,
                "SCHEMAMEM_W_RECENCY" => self.scoring.weights.recency = parse_env(var, v)?,
                "SCHEMAMEM_W_SOURCE" => self.scoring.weights.source = parse_env(var, v)?,
                "SCHEMAMEM_W_SUPPORT" => self.scoring.weights.support = parse_env(var, v)?,
                "SCHEMAMEM_AGE_UNIT" => self.scoring.age_unit = parse_env::<AgeUnit>(var, v)?,
                "SCHEMAMEM_SUPPORT_SCALING" => {
                    self.scoring.support_scaling = match v.trim().to_lowercase().as_str() {
                        "saturating" => SupportScaling::Saturating,
                        "raw" => SupportScaling::Raw,
                        _ => {
                            return Err(ConfigError::InvalidEnv {
                                var: var.clone(),
                                value: v.to_string(),
                                reason: "expected `saturating` or `raw`".into(),
                            })
                        }
                    }
                }
                "SCHEMAMEM_TIME_TOLERANCE_SECS" => {
                    self.conflict.time_tolerance_secs = if v.trim().is_empty() || v.trim() == "none" {
                        None
                    } else {
                        Some(parse_env(var, v)?)
                    }
                }
                "SCHEMAMEM_K" => self.retrieval.k = parse_env(var, v)?,
                "SCHEMAMEM_BUDGET" => self.retrieval.budget = parse_env(var, v)?,
                "SCHEMAMEM_MIN_SCORE" => self.retrieval.min_score = parse_env(var, v)?,
                "SCHEMAMEM_SYNC" => self.persistence.sync = parse_env(var, v)?,
                "SCHEMAMEM_SNAPSHOT_EVERY" => self.persistence.snapshot_every = parse_env(var, v)?,
                "SCHEMAMEM_RULES" => self.provider.rules = Some(PathBuf::from(v)),
                other => return Err(ConfigError::UnknownEnv(other.to_string())),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.adaptation.validate() {
            return invalid(e.to_string());
        }
        if let Err(e) = self.scoring.weights.validate() {
            return invalid(e.to_string());
        }
        if self.retrieval.k == 0 {
            return invalid("retrieval.k must be at least 1".into());
        }
        if self.retrieval.budget == 0 {
            return invalid("retrieval.budget must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.retrieval.min_score) {
            return invalid(format!("retrieval.min_score {} outside [0, 1]", self.retrieval.min_score));
        }
        let tolerances = std::iter::once(&self.conflict.default_tolerance).chain(self.conflict.tolerances.values());
        for t in tolerances {
            let (Tolerance::Absolute(x) | Tolerance::Relative(x)) = *t;
            if !x.is_finite() || x < 0.0 {
                return invalid(format!("tolerance {x} must be finite and >= 0"));
            }
        }
        if self.conflict.time_tolerance_secs.is_some_and(|s| s < 0) {
            return invalid("conflict.time_tolerance_secs must be >= 0".into());
        }
        if self.provider.command.as_ref().is_some_and(Vec::is_empty) {
            return invalid("provider.command must name a program".into());
        }
        if self.listen.trim().is_empty() {
            return invalid("listen address is empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let c = EngineConfig::load(None, env(&[("HOME", "/root")])).unwrap();
        assert_eq!(c.adaptation.theta_meta, 0.70);
        assert_eq!(c.adaptation.theta_elem, 0.60);
        assert_eq!(c.retrieval.budget, 8);
        assert_eq!(c.data_root, None);
    }

    #[test]
    fn file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.toml");
        std::fs::write(
            &path,
            "data_root = \"data\"\n[adaptation]\ntheta_meta = 0.5\n[conflict]\nexempt_keys = [\"close\"]\n[conflict.tolerances]\nprice = { absolute = 0.5 }\n",
        )
        .unwrap();
        let c = EngineConfig::load(
            None,
            env(&[(CONFIG_ENV, path.to_str().unwrap()), ("SCHEMAMEM_THETA_ELEM", "0.4"), ("SCHEMAMEM_K", "3")]),
        )
        .unwrap();
        assert_eq!(c.adaptation.theta_meta, 0.5);
        assert_eq!(c.adaptation.theta_elem, 0.4);
        assert_eq!(c.retrieval.k, 3);
        assert_eq!(c.data_root, Some(dir.path().join("data")));
        assert_eq!(c.conflict.tolerances["price"], Tolerance::Absolute(0.5));
        assert!(c.conflict.exempt_keys.contains("close"));
    }

    #[test]
    fn rejections() {
        assert!(matches!(EngineConfig::from_toml("colour = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(EngineConfig::from_toml("[adaptation]\ntheta = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(EngineConfig::from_toml("[adaptation]\ntheta_meta = 1.5"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            EngineConfig::load(None, env(&[("SCHEMAMEM_THETA", "0.1")])),
            Err(ConfigError::UnknownEnv(_))
        ));
        assert!(matches!(
            EngineConfig::load(None, env(&[("SCHEMAMEM_K", "many")])),
            Err(ConfigError::InvalidEnv { .. })
        ));
        assert!(matches!(
            EngineConfig::load(None, env(&[("SCHEMAMEM_W_SOURCE", "0.9")])),
            Err(ConfigError::Invalid(_))
        ));
    }
}
