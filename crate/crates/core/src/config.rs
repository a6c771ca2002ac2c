//! The single configuration tree shared by every command.
//!
//! Files are TOML. Any key can be overridden with a dotted `key=value`
//! pair, where the value is parsed as a TOML value and falls back to a
//! plain string:
//!
//! ```text
//! train.epochs=5
//! simulation.motion.speed_mm_s=[12.0, 18.0]
//! eval.bootstrap=zeros
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluation::Bootstrap;
use crate::model::{AngleEncoding, FrameTokens, ModelConfig, ModelError};
use crate::simulator::{SceneConfig, SimulationError, SplitsConfig};
use crate::training::{LrSchedule, TrainConfig, TrainingError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: String,
    pub bootstrap: Bootstrap,
    /// Feed ground-truth priors at every step instead of rolling out.
    pub teacher_forced: bool,
    pub max_overlays: usize,
    pub bench_warmup: usize,
    pub bench_iters: usize,
    pub bench_runs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: "test".into(),
            bootstrap: Bootstrap::GroundTruthFirst,
            teacher_forced: false,
            max_overlays: 12,
            bench_warmup: 10,
            bench_iters: 100,
            bench_runs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Dataset generation seed.
    pub seed: u64,
    pub simulation: SceneConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Training(#[from] TrainingError),
}

impl Config {
    /// The CPU-scale benchmark configuration.
    pub fn desk() -> Self {
        let mut model = ModelConfig::tiny(48);
        model.n_frames = 2;
        model.frame_tokens = FrameTokens::PerPatch;
        model.angle_encoding = AngleEncoding::SinCos;
        model.residual_prior = true;
        Self {
            seed: 7,
            simulation: SceneConfig::desk(),
            model,
            train: TrainConfig {
                epochs: 50,
                batch_size: 6,
                lr: 2e-3,
                lr_schedule: LrSchedule::Cosine,
                prior_jitter: 0.1,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }

    /// Full-scale setting: 224 px fan, the reference transformer, 117 epochs
    /// and 5400/48/250 sequences.
    pub fn reference() -> Self {
        Self {
            seed: 7,
            simulation: SceneConfig {
                splits: SplitsConfig::with_counts(5400, 48, 250),
                ..SceneConfig::default()
            },
            model: ModelConfig::default(),
            train: TrainConfig {
                epochs: 117,
                batch_size: 6,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }

    /// Parses TOML text, applies overrides and validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads `path` (or the defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides).map_err(|e| match (e, path) {
            (ConfigError::Parse(m), Some(p)) => ConfigError::Parse(format!("{}: {m}", p.display())),
            (e, _) => e,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.simulation.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets a dotted key in a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| ConfigError::Override(spec.into()))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
