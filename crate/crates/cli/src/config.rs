//! Experiment configuration: one JSON document resolving to everything a
//! run needs, with command-line flags overriding file values and the
//! PRIVNET_SEED environment variable overriding the seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use privnet_core::data::{Dataset, SplitSpec, SyntheticConfig};
use privnet_core::defenses::{DefenseConfig, DefenseStrategy};
use privnet_core::model::ModelConfig;
use privnet_core::train::TrainConfig;
use privnet_core::{Error, Result};

/// Where the raw interactions come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticConfig),
    Movielens {
        ratings: PathBuf,
        users: PathBuf,
        movies: PathBuf,
        /// Movies released before this year form the source domain.
        year_threshold: i32,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticConfig::default())
    }
}

/// Architecture knobs; vocabulary sizes and attribute classes are
/// resolved from the dataset at train time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub embed_dim: usize,
    pub hidden: usize,
    pub window: usize,
    pub transfer_layers: usize,
    pub transfer_enabled: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let standard = ModelConfig::standard(1, 1, vec![]);
        ModelSpec {
            embed_dim: standard.embed_dim,
            hidden: standard.hidden,
            window: standard.window,
            transfer_layers: standard.transfer_layers,
            transfer_enabled: standard.transfer_enabled,
        }
    }
}

impl ModelSpec {
    pub fn resolve(&self, dataset: &Dataset) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            window: self.window,
            transfer_layers: self.transfer_layers,
            transfer_enabled: self.transfer_enabled,
            n_source_items: dataset.source.vocab_size as usize,
            n_target_items: dataset.target.vocab_size as usize,
            attribute_classes: dataset
                .attributes
                .attributes
                .iter()
                .map(|a| a.classes)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Cutoffs for HR@K and NDCG@K.
    pub ks: Vec<usize>,
    /// Negatives per held-out positive in the ranking protocol.
    pub negatives: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { ks: vec![10], negatives: 99 }
    }
}

/// The full resolved experiment: serialized verbatim into each run
/// directory so a run can be re-executed bit-identically.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub defense: DefenseConfig,
    pub eval: EvalOptions,
    /// Dataset container path, written by `prepare` and read by `train`.
    pub data: PathBuf,
    /// Run output directory.
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialization: {e}")))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Applies the PRIVNET_SEED override to every seeded stage.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        let Ok(raw) = std::env::var("PRIVNET_SEED") else {
            return Ok(());
        };
        let seed: u64 = raw
            .parse()
            .map_err(|_| Error::config(format!("PRIVNET_SEED {raw:?} is not a u64")))?;
        self.set_seed(seed);
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.defense.seed = seed;
        self.split.seed = seed;
        if let DatasetSpec::Synthetic(ref mut synth) = self.dataset {
            synth.seed = seed;
        }
    }

    /// The adversary weight the run actually trains with: only the
    /// adversarial strategy uses λ, the transform baselines and the
    /// undefended run reduce to plain joint training.
    pub fn effective_lambda(&self) -> f64 {
        if self.defense.strategy == DefenseStrategy::Adversarial {
            self.train.lambda
        } else {
            0.0
        }
    }
}

pub fn parse_strategy(name: &str) -> Result<DefenseStrategy> {
    match name {
        "adversarial" => Ok(DefenseStrategy::Adversarial),
        "ldp_noise" => Ok(DefenseStrategy::LdpNoise),
        "blurme" => Ok(DefenseStrategy::Blurme),
        "none" => Ok(DefenseStrategy::None),
        other => Err(Error::config(format!(
            "unknown strategy {other:?}; expected adversarial, ldp_noise, blurme or none"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_resolves_to_full_defaults() {
        let config: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config.train.lambda, 1.0);
        assert_eq!(config.eval.ks, vec![10]);
        assert_eq!(config.eval.negatives, 99);
        assert!(matches!(config.dataset, DatasetSpec::Synthetic(_)));
    }

    #[test]
    fn partial_json_overrides_only_named_fields() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"train": {"lambda": 0.25}, "eval": {"ks": [5, 10]}}"#,
        )
        .unwrap();
        assert_eq!(config.train.lambda, 0.25);
        assert_eq!(config.train.batch_size, 128);
        assert_eq!(config.eval.ks, vec![5, 10]);
    }

    #[test]
    fn dataset_spec_is_tagged_by_kind() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"dataset": {"kind": "movielens", "ratings": "r.dat", "users": "u.dat",
                "movies": "m.dat", "year_threshold": 1998}}"#,
        )
        .unwrap();
        match config.dataset {
            DatasetSpec::Movielens { year_threshold, .. } => assert_eq!(year_threshold, 1998),
            other => panic!("wrong spec: {other:?}"),
        }
        let synth: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"kind": "synthetic", "users": 50}}"#).unwrap();
        match synth.dataset {
            DatasetSpec::Synthetic(s) => assert_eq!(s.users, 50),
            other => panic!("wrong spec: {other:?}"),
        }
    }

    #[test]
    fn strategy_names_parse_and_reject() {
        assert_eq!(parse_strategy("blurme").unwrap(), DefenseStrategy::Blurme);
        assert!(parse_strategy("blurMe").is_err());
    }

    #[test]
    fn effective_lambda_is_zero_for_transform_strategies() {
        let mut config = ExperimentConfig::default();
        config.train.lambda = 0.7;
        assert_eq!(config.effective_lambda(), 0.7);
        config.defense.strategy = DefenseStrategy::LdpNoise;
        assert_eq!(config.effective_lambda(), 0.0);
        config.defense.strategy = DefenseStrategy::None;
        assert_eq!(config.effective_lambda(), 0.0);
    }

    #[test]
    fn set_seed_reaches_every_stage() {
        let mut config = ExperimentConfig::default();
        config.set_seed(99);
        assert_eq!(config.train.seed, 99);
        assert_eq!(config.defense.seed, 99);
        assert_eq!(config.split.seed, 99);
        match config.dataset {
            DatasetSpec::Synthetic(s) => assert_eq!(s.seed, 99),
            _ => unreachable!(),
        }
    }
}
