//! Experiment configuration files.
//!
//! A config is a JSON document. Only `seed` is required; every section falls
//! back to its defaults, and unknown keys anywhere are an error. Relative
//! paths are resolved against the working directory.
//!
//! ```json
//! {
//!   "seed": 2024,
//!   "data_dir": "data",
//!   "output": "results/run",
//!   "generate": { "n_source": 6000, "n_target_train": 60, "n_target_test": 600,
//!                 "shift": { "image_size": 16, "transform": { "rotation_deg": 25.0 } } },
//!   "model": { "input_dim": 256, "extractor_hidden": [256, 64] },
//!   "train": { "lr": 0.001, "momentum": 0.9, "epochs": 15,
//!              "detach": { "hinge": { "margin": 3.0 } } },
//!   "protocol": { "method": "ours", "n": 5, "k": 10, "ns": [1, 3, 5, 7, 9],
//!                 "source_group": 600 }
//! }
//! ```
//!
//! Within a run, every random choice is derived from `seed`: fold `i` uses
//! `derive(seed, "fold", i)`, and each fold derives its own seeds for weight
//! initialization, shot selection, the source group and per-epoch pairing.
//! `model.seed` is only used when a model is built outside the protocol.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};
use xdomain_core::data::ShiftSpec;
use xdomain_core::model::ModelConfig;
use xdomain_core::protocol::{Method, ProtocolConfig, DEFAULT_FOLDS, DEFAULT_SHOTS};
use xdomain_core::data::DEFAULT_SOURCE_GROUP;
use xdomain_core::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Dataset root: `gen-data` writes here (unless `--out` is given), the
    /// training commands read from here.
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Result directory of the training commands (unless `--out` is given).
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

fn default_data_dir() -> PathBuf {
    "data".into()
}

fn default_output() -> PathBuf {
    "results".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub n_source: usize,
    pub n_target_train: usize,
    pub n_target_test: usize,
    pub shift: ShiftSpec,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            n_source: 6000,
            n_target_train: 60,
            n_target_test: 600,
            shift: ShiftSpec::default(),
        }
    }
}

impl GenerateConfig {
    /// Sample counts used by `gen-data --smoke`.
    pub const SMOKE_COUNTS: (usize, usize, usize) = (600, 20, 100);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub method: Method,
    /// Shots per label for `run` and `ablate`.
    pub n: usize,
    pub k: usize,
    /// Shot counts of `sweep`.
    pub ns: Vec<usize>,
    pub source_group: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            method: Method::Ours,
            n: 5,
            k: DEFAULT_FOLDS,
            ns: DEFAULT_SHOTS.to_vec(),
            source_group: DEFAULT_SOURCE_GROUP,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate().context("model")?;
        self.train.validate().context("train")?;
        let g = &self.generate;
        ensure!(
            g.n_source > 0 && g.n_target_train > 0 && g.n_target_test > 0,
            "generate: every split needs at least one sample"
        );
        let p = &self.protocol;
        ensure!(p.k >= 2, "protocol: k must be at least 2, got {}", p.k);
        ensure!(p.n >= 1, "protocol: n must be at least 1");
        ensure!(!p.ns.is_empty(), "protocol: ns is empty");
        if p.ns.contains(&0) {
            bail!("protocol: ns entries must be at least 1");
        }
        ensure!(p.source_group >= 1, "protocol: source_group must be at least 1");
        Ok(())
    }

    /// Shrinks the protocol for a quick end-to-end check: 2 folds, 1 epoch,
    /// a source group of 60.
    pub fn smoke(&mut self) {
        self.protocol.k = 2;
        self.protocol.source_group = self.protocol.source_group.min(60);
        self.train.epochs = self.train.epochs.min(1);
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            n: self.protocol.n,
            k: self.protocol.k,
            source_group: self.protocol.source_group,
            method: self.protocol.method,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_alone_is_a_complete_config() {
        let cfg = ExperimentConfig::parse(r#"{"seed": 7}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.generate, GenerateConfig::default());
        assert_eq!(cfg.protocol.ns, vec![1, 3, 5, 7, 9]);
        assert_eq!(cfg.protocol.k, 10);
        assert_eq!(cfg.protocol.source_group, 600);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::parse("{}").unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_fail_at_every_level() {
        for text in [
            r#"{"seed": 1, "sed": 2}"#,
            r#"{"seed": 1, "train": {"learning_rate": 0.1}}"#,
            r#"{"seed": 1, "model": {"embed": 4}}"#,
            r#"{"seed": 1, "generate": {"shift": {"transform": {"rotate": 3}}}}"#,
            r#"{"seed": 1, "protocol": {"folds": 3}}"#,
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn semantic_checks_run_after_parsing() {
        assert!(ExperimentConfig::parse(r#"{"seed": 1, "protocol": {"k": 1}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"seed": 1, "train": {"alpha": -1}}"#).is_err());
        assert!(ExperimentConfig::parse(r#"{"seed": 1, "model": {"embed_dim": 0}}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::parse(
            r#"{"seed": 3, "train": {"momentum": 0.9, "detach": {"hinge": {"margin": 2.5}}},
                "protocol": {"method": "source-only"}}"#,
        )
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}
