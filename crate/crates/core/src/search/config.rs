//! Search configuration and its TOML schema.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::eval::GanConfig;

/// Keys that have no default.
pub const REQUIRED_KEYS: [(&str, &str); 3] = [
    ("seed", "integer"),
    ("budget", "integer"),
    ("evaluator", "string: \"surrogate\" or \"micro-gan\""),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required field(s): {}", .0.iter().map(|(k, t)| format!("`{k}` ({t})")).collect::<Vec<_>>().join(", "))]
    Missing(Vec<(String, String)>),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorKind {
    Surrogate,
    MicroGan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub lambda: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { lambda: 0.5 }
    }
}

/// Synthetic data and probe used by the micro-GAN evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub per_class_train: usize,
    pub per_class_heldout: usize,
    /// Defaults to the search seed.
    pub seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            per_class_train: 400,
            per_class_heldout: 250,
            seed: None,
        }
    }
}

fn d_lr() -> f64 {
    0.0006
}
fn d_entropy() -> f64 {
    0.0001
}
fn d_batch() -> usize {
    10
}
fn d_decay() -> f64 {
    0.95
}
fn d_is_min() -> f64 {
    1.0
}
fn d_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub seed: u64,
    /// Total genomes evaluated; a multiple of `batch_size`.
    pub budget: usize,
    pub evaluator: EvaluatorKind,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_entropy")]
    pub entropy_coef: f64,
    /// Rewards collected per controller update.
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_decay")]
    pub baseline_decay: f64,
    #[serde(default = "d_is_min")]
    pub is_min: f64,
    /// Upper reward bound. Unset: 11.24 for the surrogate, the probe's IS
    /// on held-out real data for the micro-GAN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_max: Option<f64>,
    #[serde(default = "d_one")]
    pub workers: usize,
    /// Controller updates between checkpoints.
    #[serde(default = "d_one")]
    pub checkpoint_every: usize,
    /// Independent trainings averaged per genome.
    #[serde(default = "d_one")]
    pub runs_per_genome: usize,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub gan: GanConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub data: DataConfig,
}

impl SearchConfig {
    pub fn new(seed: u64, budget: usize, evaluator: EvaluatorKind) -> Self {
        Self {
            seed,
            budget,
            evaluator,
            lr: d_lr(),
            entropy_coef: d_entropy(),
            batch_size: d_batch(),
            baseline_decay: d_decay(),
            is_min: d_is_min(),
            is_max: None,
            workers: 1,
            checkpoint_every: 1,
            runs_per_genome: 1,
            controller: ControllerConfig::default(),
            gan: GanConfig::default(),
            surrogate: SurrogateConfig::default(),
            data: DataConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().trim().to_string()))?;
        let missing: Vec<(String, String)> = REQUIRED_KEYS
            .iter()
            .filter(|(k, _)| !table.contains_key(*k))
            .map(|(k, t)| (k.to_string(), t.to_string()))
            .collect();
        if !missing.is_empty() {
            return Err(ConfigError::Missing(missing));
        }
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid(describe(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn updates(&self) -> usize {
        self.budget / self.batch_size
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.batch_size == 0 {
            return bad("`batch_size` must be at least 1".into());
        }
        if self.budget == 0 || !self.budget.is_multiple_of(self.batch_size) {
            return bad(format!("`budget` ({}) must be a positive multiple of `batch_size` ({})", self.budget, self.batch_size));
        }
        if let Some(max) = self.is_max {
            if !(max > self.is_min) {
                return bad(format!("`is_max` ({max}) must exceed `is_min` ({})", self.is_min));
            }
        }
        for (k, v) in [("lr", self.lr), ("entropy_coef", self.entropy_coef), ("is_min", self.is_min)] {
            if !v.is_finite() {
                return bad(format!("`{k}` must be finite"));
            }
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("`baseline_decay` must be in [0, 1)".into());
        }
        for (k, v) in [("workers", self.workers), ("checkpoint_every", self.checkpoint_every), ("runs_per_genome", self.runs_per_genome)] {
            if v == 0 {
                return bad(format!("`{k}` must be at least 1"));
            }
        }
        if self.controller.hidden == 0 {
            return bad("`controller.hidden` must be at least 1".into());
        }
        Ok(())
    }
}

fn describe(e: &toml::de::Error) -> String {
    let msg = e.message().trim();
    match e.span() {
        Some(span) => format!("{msg} (at byte {})", span.start),
        None => msg.to_string(),
    }
}

pub fn parse_config(path: &Path) -> Result<SearchConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SearchConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_lists_every_required_field() {
        let err = SearchConfig::from_toml_str("").unwrap_err().to_string();
        for (k, _) in REQUIRED_KEYS {
            assert!(err.contains(&format!("`{k}`")), "{err}");
        }
    }

    #[test]
    fn defaults_fill_omitted_fields() {
        let cfg = SearchConfig::from_toml_str("seed = 3\nbudget = 20\nevaluator = \"surrogate\"\n").unwrap();
        assert_eq!(cfg.lr, 0.0006);
        assert_eq!(cfg.entropy_coef, 0.0001);
        assert_eq!(cfg.batch_size, 10);
        assert_eq!(cfg.gan.n_critic, 5);
        assert_eq!(cfg.gan.adam.lr, 2e-4);
        assert_eq!(cfg.controller.op_temperature, 5.0);
        assert_eq!(cfg.controller.op_clip, 2.5);
        assert_eq!(cfg, SearchConfig::new(3, 20, EvaluatorKind::Surrogate));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = SearchConfig::from_toml_str("seed = 1\nbudget = 10\nevaluator = \"surrogate\"\nmoemntum = 0.9\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("moemntum"), "{err}");
        let err = SearchConfig::from_toml_str("seed = 1\nbudget = 10\nevaluator = \"surrogate\"\n[gan]\nstepz = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("stepz"), "{err}");
    }

    #[test]
    fn type_errors_name_the_field() {
        let err = SearchConfig::from_toml_str("seed = 1\nbudget = 10\nevaluator = \"surrogate\"\nlr = \"fast\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("lr") || err.contains("f64"), "{err}");
    }

    #[test]
    fn budget_must_divide_into_batches() {
        assert!(SearchConfig::from_toml_str("seed = 1\nbudget = 15\nevaluator = \"surrogate\"\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = SearchConfig::new(9, 40, EvaluatorKind::MicroGan);
        cfg.is_max = Some(7.5);
        cfg.gan.steps = 3;
        assert_eq!(SearchConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }
}
