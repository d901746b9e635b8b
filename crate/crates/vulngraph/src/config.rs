//! Flat `key = value` configuration shared by the examples, the
//! `vulngraph` binary, and the pipeline stages.
//!
//! The file format is UTF-8 text, one key per line, `#` starts a
//! full-line comment, blank lines are ignored. Unknown keys are rejected
//! so typos fail loudly, and value parse errors always name the key.

use crate::ggnn::{Activation, LossKind, Readout, TrainConfig};
use crate::vectorize::{EmbedMode, EmbedOptions, UnkPolicy};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {content:?}")]
    Syntax { line: usize, content: String },
    #[error("unknown config key {key:?} (line {line})")]
    UnknownKey { key: String, line: usize },
    #[error("config key {key:?}: {message} (got {value:?})")]
    BadValue { key: String, value: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Every tunable of the pipeline in one flat struct. Defaults follow the
/// reference training configuration (hidden 100, 5 timesteps, learning
/// rate 0.001, dropout keep 0.8, ≤ 699 nodes per graph); values that have
/// no published setting (embedding hyperparameters, split ratios,
/// generator size, decision threshold) hold documented local defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    // Classifier.
    pub hidden_size: usize,
    pub timesteps: usize,
    pub learning_rate: f64,
    pub dropout_keep: f64,
    pub node_budget: usize,
    pub max_nodes: usize,
    pub activation: Activation,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub readout: Readout,
    pub loss: LossKind,
    pub focal_gamma: f64,
    pub class_weight_pos: f64,
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub reverse_edges: bool,
    pub edge_gates: bool,
    pub per_class_nodes: bool,
    // Embeddings and vectorization.
    pub embed_dim: usize,
    pub embed_window: usize,
    pub embed_negatives: usize,
    pub embed_epochs: usize,
    pub embed_learning_rate: f32,
    pub unk_policy: UnkPolicy,
    pub vector_mode: EmbedMode,
    // Corpus generation and splitting.
    pub count: usize,
    pub vuln_ratio: f64,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub threshold: f64,
    /// Master seed: drives generation, splitting, embedding training,
    /// batch packing, and parameter initialization alike.
    pub seed: u64,
    // Artifact locations.
    pub dataset_dir: PathBuf,
    pub graphs_dir: PathBuf,
    pub embeddings_path: PathBuf,
    pub vectors_dir: PathBuf,
    pub checkpoint_path: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let embed = EmbedOptions::default();
        PipelineConfig {
            hidden_size: train.hidden_size,
            timesteps: train.timesteps,
            learning_rate: train.learning_rate,
            dropout_keep: train.dropout_keep,
            node_budget: train.node_budget,
            max_nodes: train.max_nodes,
            activation: train.activation,
            adam_beta1: train.adam_beta1,
            adam_beta2: train.adam_beta2,
            adam_epsilon: train.adam_epsilon,
            readout: train.readout,
            loss: train.loss,
            focal_gamma: train.focal_gamma,
            class_weight_pos: train.class_weight_pos,
            epochs: train.epochs,
            early_stop_patience: train.early_stop_patience,
            reverse_edges: train.reverse_edges,
            edge_gates: train.edge_gates,
            per_class_nodes: train.per_class_nodes,
            embed_dim: embed.dim,
            embed_window: embed.window,
            embed_negatives: embed.negatives,
            embed_epochs: embed.epochs,
            embed_learning_rate: embed.learning_rate,
            unk_policy: embed.unk_policy,
            vector_mode: EmbedMode::Average,
            count: 5000,
            vuln_ratio: 0.5,
            train_ratio: 0.8,
            val_ratio: 0.1,
            test_ratio: 0.1,
            threshold: 0.5,
            seed: 42,
            dataset_dir: PathBuf::from("data/corpus"),
            graphs_dir: PathBuf::from("data/graphs"),
            embeddings_path: PathBuf::from("data/embeddings.json"),
            vectors_dir: PathBuf::from("data/vectors"),
            checkpoint_path: PathBuf::from("data/model.ckpt"),
            reports_dir: PathBuf::from("data/reports"),
        }
    }
}

fn parse_as<T: std::str::FromStr>(
    key: &str,
    value: &str,
    expected: &str,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        message: format!("expected {expected}: {e}"),
    })
}

impl PipelineConfig {
    /// Assign one key. Both the file parser and command-line flag
    /// overrides go through here, so they accept identical spellings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let unknown = || ConfigError::UnknownKey { key: key.to_string(), line: 0 };
        match key {
            "hidden_size" => self.hidden_size = parse_as(key, value, "an integer")?,
            "timesteps" => self.timesteps = parse_as(key, value, "an integer")?,
            "learning_rate" => self.learning_rate = parse_as(key, value, "a number")?,
            "dropout_keep" => self.dropout_keep = parse_as(key, value, "a number")?,
            "node_budget" => self.node_budget = parse_as(key, value, "an integer")?,
            "max_nodes" => self.max_nodes = parse_as(key, value, "an integer")?,
            "activation" => self.activation = parse_as(key, value, "an activation")?,
            "adam_beta1" => self.adam_beta1 = parse_as(key, value, "a number")?,
            "adam_beta2" => self.adam_beta2 = parse_as(key, value, "a number")?,
            "adam_epsilon" => self.adam_epsilon = parse_as(key, value, "a number")?,
            "readout" => self.readout = parse_as(key, value, "a readout")?,
            "loss" => self.loss = parse_as(key, value, "a loss")?,
            "focal_gamma" => self.focal_gamma = parse_as(key, value, "a number")?,
            "class_weight_pos" => self.class_weight_pos = parse_as(key, value, "a number")?,
            "epochs" => self.epochs = parse_as(key, value, "an integer")?,
            "early_stop_patience" => {
                self.early_stop_patience = parse_as(key, value, "an integer")?
            }
            "reverse_edges" => self.reverse_edges = parse_as(key, value, "true or false")?,
            "edge_gates" => self.edge_gates = parse_as(key, value, "true or false")?,
            "per_class_nodes" => self.per_class_nodes = parse_as(key, value, "true or false")?,
            "embed_dim" => self.embed_dim = parse_as(key, value, "an integer")?,
            "embed_window" => self.embed_window = parse_as(key, value, "an integer")?,
            "embed_negatives" => self.embed_negatives = parse_as(key, value, "an integer")?,
            "embed_epochs" => self.embed_epochs = parse_as(key, value, "an integer")?,
            "embed_learning_rate" => {
                self.embed_learning_rate = parse_as(key, value, "a number")?
            }
            "unk_policy" => self.unk_policy = parse_as(key, value, "mean or zero")?,
            "vector_mode" => self.vector_mode = parse_as(key, value, "average or concat")?,
            "count" => self.count = parse_as(key, value, "an integer")?,
            "vuln_ratio" => self.vuln_ratio = parse_as(key, value, "a number")?,
            "train_ratio" => self.train_ratio = parse_as(key, value, "a number")?,
            "val_ratio" => self.val_ratio = parse_as(key, value, "a number")?,
            "test_ratio" => self.test_ratio = parse_as(key, value, "a number")?,
            "threshold" => self.threshold = parse_as(key, value, "a number")?,
            "seed" => self.seed = parse_as(key, value, "an integer")?,
            "dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "graphs_dir" => self.graphs_dir = PathBuf::from(value),
            "embeddings_path" => self.embeddings_path = PathBuf::from(value),
            "vectors_dir" => self.vectors_dir = PathBuf::from(value),
            "checkpoint_path" => self.checkpoint_path = PathBuf::from(value),
            "reports_dir" => self.reports_dir = PathBuf::from(value),
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Parse config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: i + 1, content: raw.to_string() });
            };
            config.set(key.trim(), value.trim()).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => {
                    ConfigError::UnknownKey { key, line: i + 1 }
                }
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Load and parse a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }

    /// Cross-field checks that individual `set` calls can't see.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sum = self.train_ratio + self.val_ratio + self.test_ratio;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "train_ratio + val_ratio + test_ratio must be 1 (got {sum})"
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::Invalid(format!(
                "threshold must lie in [0, 1] (got {})",
                self.threshold
            )));
        }
        if !(self.vuln_ratio > 0.0 && self.vuln_ratio < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "vuln_ratio must lie strictly between 0 and 1 (got {})",
                self.vuln_ratio
            )));
        }
        if self.count == 0 {
            return Err(ConfigError::Invalid("count must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden_size: self.hidden_size,
            timesteps: self.timesteps,
            learning_rate: self.learning_rate,
            dropout_keep: self.dropout_keep,
            node_budget: self.node_budget,
            max_nodes: self.max_nodes,
            activation: self.activation,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            readout: self.readout,
            loss: self.loss,
            focal_gamma: self.focal_gamma,
            class_weight_pos: self.class_weight_pos,
            epochs: self.epochs,
            early_stop_patience: self.early_stop_patience,
            seed: self.seed,
            reverse_edges: self.reverse_edges,
            edge_gates: self.edge_gates,
            per_class_nodes: self.per_class_nodes,
        }
    }

    pub fn embed_options(&self) -> EmbedOptions {
        EmbedOptions {
            dim: self.embed_dim,
            window: self.embed_window,
            negatives: self.embed_negatives,
            epochs: self.embed_epochs,
            learning_rate: self.embed_learning_rate,
            seed: self.seed,
            unk_policy: self.unk_policy,
        }
    }

    pub fn ratios(&self) -> (f64, f64, f64) {
        (self.train_ratio, self.val_ratio, self.test_ratio)
    }
}
