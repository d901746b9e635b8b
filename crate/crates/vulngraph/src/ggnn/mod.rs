//! Gated graph neural network for binary graph classification.
//!
//! The model embeds each node's feature vector into a hidden state, runs a
//! fixed number of synchronous message-passing steps (one learned linear map
//! per edge type and direction, GRU state update), and reads the graph out
//! through a gated per-node scoring head followed by sum, average, or
//! virtual-master aggregation. Training is full-batch Adam over packed
//! multi-graph batches; everything is single-threaded and deterministic for
//! a fixed seed.

pub mod checkpoint;
pub mod model;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{
    adam_step, backward, dropout_seed, forward, init_params, loss_and_grad, pack_graphs,
    pair_kinds, positive_probabilities, AdamState, Activations, ModelParams, PackedBatch,
    PairKind, PairSource, ParamMeta,
};
pub use tensor::{Mat, Real};

use crate::vectorize::{Batch, VectorizedGraph};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Candidate activation of the GRU cell. Only tanh is implemented; the enum
/// exists so configs can state it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("tanh")
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation '{other}' (expected: tanh)")),
        }
    }
}

/// How per-node scores become one graph logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    #[default]
    Sum,
    Average,
    Master,
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Sum => "sum",
            Readout::Average => "average",
            Readout::Master => "master",
        })
    }
}

impl FromStr for Readout {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Readout::Sum),
            "average" => Ok(Readout::Average),
            "master" => Ok(Readout::Master),
            other => Err(format!("unknown readout '{other}' (expected: sum, average, master)")),
        }
    }
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Ce,
    WeightedCe,
    Focal,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Ce => "ce",
            LossKind::WeightedCe => "weighted_ce",
            LossKind::Focal => "focal",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "weighted_ce" => Ok(LossKind::WeightedCe),
            "focal" => Ok(LossKind::Focal),
            other => {
                Err(format!("unknown loss '{other}' (expected: ce, weighted_ce, focal)"))
            }
        }
    }
}

/// Full training configuration. `Default` is the reference setup: hidden
/// width 100, 5 propagation steps, Adam at 1e-3, dropout keep 0.8, sum
/// readout, plain cross-entropy, reversed edge channels on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub timesteps: usize,
    pub learning_rate: f64,
    pub dropout_keep: f64,
    /// Max summed node count per training batch (packing granularity).
    pub node_budget: usize,
    /// Graphs larger than this are excluded by the packer.
    pub max_nodes: usize,
    pub activation: Activation,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub readout: Readout,
    pub loss: LossKind,
    /// Focusing exponent for the focal loss.
    pub focal_gamma: f64,
    /// Positive-class weight for weighted_ce and focal (plain ce ignores it).
    pub class_weight_pos: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation F1
    /// (0 disables early stopping).
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Add a reversed propagation channel per edge type.
    pub reverse_edges: bool,
    /// Learn a scalar gate per propagation channel.
    pub edge_gates: bool,
    /// Score two classes per node and readout into a 2-logit softmax head.
    pub per_class_nodes: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            hidden_size: 100,
            timesteps: 5,
            learning_rate: 1e-3,
            dropout_keep: 0.8,
            node_budget: 100_000,
            max_nodes: 699,
            activation: Activation::Tanh,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            readout: Readout::Sum,
            loss: LossKind::Ce,
            focal_gamma: 2.0,
            class_weight_pos: 2.0,
            epochs: 50,
            early_stop_patience: 5,
            seed: 42,
            reverse_edges: true,
            edge_gates: false,
            per_class_nodes: false,
        }
    }
}

impl TrainConfig {
    /// Output columns of the per-node scoring head.
    pub fn classes(&self) -> usize {
        if self.per_class_nodes {
            2
        } else {
            1
        }
    }

    pub fn validate(&self, feature_dim: usize) -> Result<(), GgnnError> {
        let fail = |m: String| Err(GgnnError::InvalidConfig(m));
        if self.hidden_size == 0 {
            return fail("hidden_size must be at least 1".into());
        }
        if feature_dim == 0 {
            return fail("feature width must be at least 1".into());
        }
        if feature_dim > self.hidden_size {
            return fail(format!(
                "feature width {} exceeds hidden_size {}; node features must fit inside the hidden state",
                feature_dim, self.hidden_size
            ));
        }
        if self.timesteps == 0 {
            return fail("timesteps must be at least 1".into());
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return fail(format!("dropout_keep must be in (0, 1], got {}", self.dropout_keep));
        }
        if self.node_budget == 0 || self.max_nodes == 0 {
            return fail("node_budget and max_nodes must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.focal_gamma < 0.0 {
            return fail(format!("focal_gamma must be non-negative, got {}", self.focal_gamma));
        }
        if !(self.class_weight_pos > 0.0) {
            return fail(format!("class_weight_pos must be positive, got {}", self.class_weight_pos));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GgnnError {
    #[error("no graphs to process")]
    EmptyBatch,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("graph '{sample_id}' has no nodes")]
    EmptyGraph { sample_id: String },
    #[error("graph '{sample_id}' has label {label}; expected 0 or 1")]
    InvalidLabel { sample_id: String, label: u8 },
    #[error("graph '{sample_id}' has feature width {got}; expected {expected}")]
    FeatureWidth { expected: usize, got: usize, sample_id: String },
    #[error("graph '{sample_id}': {message}")]
    Malformed { sample_id: String, message: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Checkpoint { path: String, message: String },
}

/// Per-epoch training record.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
}

/// Result of `train`: the best-validation parameters, the final optimizer
/// state, and the epoch-by-epoch history.
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub opt: AdamState<f32>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

fn feature_width_of(graphs: &[VectorizedGraph]) -> Option<usize> {
    graphs.iter().find(|g| !g.features.is_empty()).map(|g| g.features[0].len())
}

/// Precision/recall/F1 of thresholded scores; zero denominators yield zero.
fn prf1_at(scores: &[f64], labels: &[u8], threshold: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fne == 0 { 0.0 } else { tp as f64 / (tp + fne) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Split `graphs` into contiguous runs of at most `node_budget` nodes
/// (always at least one graph per run) and pack each run.
fn chunk_and_pack<T: Real>(
    graphs: &[VectorizedGraph],
    config: &TrainConfig,
    feature_dim: usize,
) -> Result<Vec<PackedBatch<T>>, GgnnError> {
    let mut packs = Vec::new();
    let mut start = 0usize;
    let mut nodes = 0usize;
    for (i, g) in graphs.iter().enumerate() {
        if i > start && nodes + g.node_count > config.node_budget {
            packs.push(pack_graphs(&graphs[start..i], config, feature_dim)?);
            start = i;
            nodes = 0;
        }
        nodes += g.node_count;
    }
    if start < graphs.len() {
        packs.push(pack_graphs(&graphs[start..], config, feature_dim)?);
    }
    Ok(packs)
}

/// Positive-class probability for each graph, in order (evaluation mode,
/// no dropout).
pub fn score_graphs(
    params: &ModelParams<f32>,
    config: &TrainConfig,
    graphs: &[VectorizedGraph],
) -> Result<Vec<f64>, GgnnError> {
    if graphs.is_empty() {
        return Ok(Vec::new());
    }
    let mut scores = Vec::with_capacity(graphs.len());
    for pack in chunk_and_pack::<f32>(graphs, config, params.meta.features)? {
        let (logits, _) = forward(&pack, params, config, false, 0);
        scores.extend(positive_probabilities(&logits).into_iter().map(|p| p as f64));
    }
    Ok(scores)
}

/// Classify a single graph: (label, positive-class confidence).
pub fn predict(
    params: &ModelParams<f32>,
    config: &TrainConfig,
    graph: &VectorizedGraph,
    threshold: f64,
) -> Result<(u8, f64), GgnnError> {
    let p = score_graphs(params, config, std::slice::from_ref(graph))?[0];
    Ok((u8::from(p >= threshold), p))
}

/// Like `predict`, but also returns the per-node contribution scores that
/// the readout aggregated — useful for inspecting what drove a decision.
pub fn predict_detailed(
    params: &ModelParams<f32>,
    config: &TrainConfig,
    graph: &VectorizedGraph,
    threshold: f64,
) -> Result<(u8, f64, Vec<f64>), GgnnError> {
    let pack = pack_graphs::<f32>(
        std::slice::from_ref(graph),
        config,
        params.meta.features,
    )?;
    let (logits, acts) = forward(&pack, params, config, false, 0);
    let p = positive_probabilities(&logits)[0] as f64;
    let per_node = model::node_scores(&acts.scores, &pack).remove(0);
    Ok((u8::from(p >= threshold), p, per_node))
}

/// Train on pre-packed batches, tracking validation F1 (threshold 0.5) per
/// epoch. Returns the parameters from the best validation epoch. Training
/// order and dropout are fully determined by `config.seed`.
pub fn train(
    batches: &[Batch],
    val_graphs: &[VectorizedGraph],
    config: &TrainConfig,
) -> Result<TrainOutcome, GgnnError> {
    train_with(batches, val_graphs, config, &mut |_| {})
}

/// [`train`] with a per-epoch observer, called after each epoch's stats
/// are final — lets callers stream progress on long runs.
pub fn train_with(
    batches: &[Batch],
    val_graphs: &[VectorizedGraph],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome, GgnnError> {
    let train_graph_count: usize = batches.iter().map(|b| b.graphs.len()).sum();
    if train_graph_count == 0 {
        return Err(GgnnError::EmptySplit("training"));
    }
    if val_graphs.is_empty() {
        return Err(GgnnError::EmptySplit("validation"));
    }
    let feature_dim = batches
        .iter()
        .find_map(|b| feature_width_of(&b.graphs))
        .ok_or(GgnnError::EmptyBatch)?;
    config.validate(feature_dim)?;

    let mut params = init_params::<f32>(config, feature_dim, config.seed)?;
    let packed: Vec<PackedBatch<f32>> = batches
        .iter()
        .filter(|b| !b.graphs.is_empty())
        .map(|b| pack_graphs(&b.graphs, config, feature_dim))
        .collect::<Result<_, _>>()?;
    let val_packs = chunk_and_pack::<f32>(val_graphs, config, feature_dim)?;

    let mut opt = AdamState::new(&params);
    let mut history: Vec<EpochStats> = Vec::new();
    let mut best_params = params.clone();
    let mut best_f1 = -1.0f64;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for (bi, pack) in packed.iter().enumerate() {
            let (logits, acts) =
                forward(pack, &params, config, true, dropout_seed(config.seed, epoch, bi));
            let (loss, dlogits) = loss_and_grad(&logits, &pack.labels, config);
            let loss = loss as f64;
            if !loss.is_finite() {
                return Err(GgnnError::NonFiniteLoss { epoch, batch: bi });
            }
            let grads = backward(pack, &params, config, &acts, &dlogits);
            adam_step(&mut params, &grads, &mut opt, config);
            loss_sum += loss * pack.labels.len() as f64;
            seen += pack.labels.len();
        }

        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for pack in &val_packs {
            let (logits, _) = forward(pack, &params, config, false, 0);
            scores.extend(positive_probabilities(&logits).into_iter().map(|p| p as f64));
            labels.extend_from_slice(&pack.labels);
        }
        let (val_precision, val_recall, val_f1) = prf1_at(&scores, &labels, 0.5);
        history.push(EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / seen.max(1) as f64,
            val_precision,
            val_recall,
            val_f1,
        });
        on_epoch(history.last().expect("just pushed"));

        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_epoch = epoch + 1;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        opt,
        history,
        best_epoch,
        best_val_f1: best_f1.max(0.0),
    })
}

/// Result of a finite-difference gradient verification.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors_checked: usize,
    pub entries_checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

/// Compare the analytic gradient against central finite differences, in
/// f64, over one packed batch of `graphs`. Checks up to
/// `max_entries_per_tensor` evenly-spaced entries of every tensor and
/// returns the worst relative error |a−f| / max(|a|, |f|, 1e-4).
pub fn gradient_check(
    config: &TrainConfig,
    graphs: &[VectorizedGraph],
    max_entries_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport, GgnnError> {
    let feature_dim = feature_width_of(graphs).ok_or(GgnnError::EmptyBatch)?;
    config.validate(feature_dim)?;
    let batch = pack_graphs::<f64>(graphs, config, feature_dim)?;
    let params = init_params::<f64>(config, feature_dim, seed)?;
    let drop_seed = seed ^ 0x5eed;

    let loss_of = |p: &ModelParams<f64>| -> f64 {
        let (logits, _) = forward(&batch, p, config, true, drop_seed);
        loss_and_grad(&logits, &batch.labels, config).0
    };

    let (logits, acts) = forward(&batch, &params, config, true, drop_seed);
    let (_, dlogits) = loss_and_grad(&logits, &batch.labels, config);
    let analytic = backward(&batch, &params, config, &acts, &dlogits);

    let mut probe = params.clone();
    let shapes: Vec<(String, usize)> =
        params.tensors().iter().map(|(n, t)| (n.clone(), t.data.len())).collect();
    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let mut worst = String::from("-");
    let mut entries = 0usize;

    for (ti, (name, len)) in shapes.iter().enumerate() {
        let stride = (len / max_entries_per_tensor.max(1)).max(1);
        let mut idx = 0usize;
        while idx < *len {
            let orig = probe.tensors()[ti].1.data[idx];
            probe.tensors_mut()[ti].1.data[idx] = orig + h;
            let lp = loss_of(&probe);
            probe.tensors_mut()[ti].1.data[idx] = orig - h;
            let lm = loss_of(&probe);
            probe.tensors_mut()[ti].1.data[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = analytic.tensors()[ti].1.data[idx];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{name}[{idx}]");
            }
            entries += 1;
            idx += stride;
        }
    }

    Ok(GradCheckReport {
        tensors_checked: shapes.len(),
        entries_checked: entries,
        max_rel_err: max_rel,
        worst,
    })
}
