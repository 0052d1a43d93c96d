//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sqlbalance::balance::Lexicon;
use sqlbalance::evalharness::{FinetuneConfig, LfMode, PipelineConfig};
use sqlbalance::parser::{ParserConfig, TrainConfig, DEFAULT_HASH_BITS, DEFAULT_VALUE_WINDOW};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Table files; all are merged into one table map.
    pub tables: Vec<PathBuf>,
    pub model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSettings {
    pub enabled: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub subset_fraction: f64,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        FinetuneSettings {
            enabled: true,
            epochs: 2,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            subset_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Top-level seed; every stage seed is derived from it by stage name.
    pub seed: u64,
    /// Oversampling factor for `balance`, `train` and `kfold` (0 = no balancing).
    pub factor: usize,
    /// Ratios swept by `experiment`, besides the implicit baseline.
    pub factors: Vec<usize>,
    /// Repetition seeds for `experiment`.
    pub seeds: Vec<u64>,
    /// Fold count for `kfold`; no default.
    pub k: Option<usize>,
    pub train: TrainSettings,
    pub finetune: FinetuneSettings,
    pub hash_bits: u32,
    pub value_window: usize,
    /// Restrict the comparison lexicon to the five literal phrases.
    pub strict_lexicon: bool,
    pub order_sensitive_lf: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            seed: 0,
            factor: 0,
            factors: vec![1, 2, 3],
            seeds: vec![1, 2, 3],
            k: None,
            train: TrainSettings::default(),
            finetune: FinetuneSettings::default(),
            hash_bits: DEFAULT_HASH_BITS,
            value_window: DEFAULT_VALUE_WINDOW,
            strict_lexicon: false,
            order_sensitive_lf: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            epsilon: self.train.epsilon,
        }
    }

    pub fn finetune_config(&self, seed: u64) -> FinetuneConfig {
        FinetuneConfig {
            train: TrainConfig {
                learning_rate: self.finetune.learning_rate,
                batch_size: self.finetune.batch_size,
                epochs: self.finetune.epochs,
                ..self.train_config(seed)
            },
            subset_fraction: self.finetune.subset_fraction,
        }
    }

    pub fn parser_config(&self) -> ParserConfig {
        ParserConfig {
            hash_bits: self.hash_bits,
            value_window: self.value_window,
            lexicon: Lexicon::for_mode(self.strict_lexicon),
        }
    }

    pub fn lf_mode(&self) -> LfMode {
        if self.order_sensitive_lf {
            LfMode::OrderSensitive
        } else {
            LfMode::OrderInsensitive
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            train: self.train_config(0),
            finetune: self.finetune.enabled.then(|| self.finetune_config(0)),
            parser: self.parser_config(),
            lf_mode: self.lf_mode(),
        }
    }
}
