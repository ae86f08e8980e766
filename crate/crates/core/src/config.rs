//! Calibration constants, loadable from a TOML file.
//!
//! ```toml
//! kappa = 0.25
//! beta = 0.05
//! default_risk = "high"
//! rollback_bound_seconds = 60
//!
//! [thresholds]
//! inst = 0.3
//!
//! [p_unknown]
//! evid = 0.4
//! ```
//!
//! Omitted keys keep their defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::model::{Dimension, RiskLevel};
use crate::number::Number;

/// Environment variable naming the configuration file.
pub const CONFIG_ENV: &str = "INTENTC_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Weight of proxy signals in the gap estimate.
    pub kappa: Number,
    /// Width of the ask band below a risk threshold.
    pub beta: Number,
    /// Risk level assumed for operations the contract does not rate.
    pub default_risk: RiskLevel,
    pub rollback_bound_seconds: Number,
    pub thresholds: BTreeMap<Dimension, Number>,
    pub p_unknown: BTreeMap<Dimension, Number>,
    pub unit_cost: BTreeMap<Dimension, Number>,
    pub risk_scores: BTreeMap<RiskLevel, Number>,
}

fn per_dim(v: Number) -> BTreeMap<Dimension, Number> {
    Dimension::ALL.iter().map(|d| (*d, v)).collect()
}

impl Default for Config {
    fn default() -> Self {
        Config {
            kappa: Number::new(1, 4),
            beta: Number::new(1, 20),
            default_risk: RiskLevel::High,
            rollback_bound_seconds: Number::int(60),
            thresholds: per_dim(Number::new(3, 10)),
            p_unknown: per_dim(Number::new(1, 2)),
            unit_cost: per_dim(Number::ONE),
            risk_scores: [
                (RiskLevel::Low, Number::new(1, 4)),
                (RiskLevel::Medium, Number::new(1, 2)),
                (RiskLevel::High, Number::new(3, 4)),
                (RiskLevel::Critical, Number::ONE),
            ]
            .into_iter()
            .collect(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Value(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    kappa: Option<Number>,
    beta: Option<Number>,
    default_risk: Option<String>,
    rollback_bound_seconds: Option<Number>,
    #[serde(default)]
    thresholds: BTreeMap<Dimension, Number>,
    #[serde(default)]
    p_unknown: BTreeMap<Dimension, Number>,
    #[serde(default)]
    unit_cost: BTreeMap<Dimension, Number>,
    #[serde(default)]
    risk_scores: BTreeMap<RiskLevel, Number>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let raw: Raw = toml::from_str(text)?;
        let mut c = Config::default();
        let bad = |m: String| Err(ConfigError::Value(m));
        if let Some(v) = raw.kappa {
            if v.is_negative() {
                return bad(format!("kappa must be nonnegative, got {v}"));
            }
            c.kappa = v;
        }
        if let Some(v) = raw.beta {
            if v != v.clamp_unit() {
                return bad(format!("beta must lie in [0, 1], got {v}"));
            }
            c.beta = v;
        }
        if let Some(r) = raw.default_risk {
            c.default_risk = r.parse().map_err(ConfigError::Value)?;
        }
        if let Some(v) = raw.rollback_bound_seconds {
            if v.is_negative() {
                return bad(format!("rollback_bound_seconds must be nonnegative, got {v}"));
            }
            c.rollback_bound_seconds = v;
        }
        for (d, v) in raw.thresholds {
            if v != v.clamp_unit() {
                return bad(format!("thresholds.{d} must lie in [0, 1], got {v}"));
            }
            c.thresholds.insert(d, v);
        }
        for (d, v) in raw.p_unknown {
            if v <= Number::ZERO || v >= Number::ONE {
                return bad(format!("p_unknown.{d} must lie in (0, 1), got {v}"));
            }
            c.p_unknown.insert(d, v);
        }
        for (d, v) in raw.unit_cost {
            if v.is_negative() {
                return bad(format!("unit_cost.{d} must be nonnegative, got {v}"));
            }
            c.unit_cost.insert(d, v);
        }
        c.risk_scores.extend(raw.risk_scores);
        let scores: Vec<Number> = c.risk_scores.values().copied().collect();
        if scores.windows(2).any(|w| w[0] >= w[1]) {
            return bad("risk_scores must be strictly increasing from low to critical".into());
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Config::from_toml(&text)
    }

    /// Reads the file named by `INTENTC_CONFIG`, or returns defaults when
    /// the variable is unset.
    pub fn from_env() -> Result<Config, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Config::load(Path::new(&p)),
            _ => Ok(Config::default()),
        }
    }

    pub fn threshold(&self, d: Dimension) -> Number {
        self.thresholds[&d]
    }

    pub fn p_unknown(&self, d: Dimension) -> Number {
        self.p_unknown[&d]
    }

    pub fn risk_score(&self, level: RiskLevel) -> Number {
        self.risk_scores[&level]
    }
}
