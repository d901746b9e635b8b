//! Classification metrics, precision-recall curves, a bag-of-tokens
//! logistic-regression baseline, and a per-vulnerability-class harness
//! that trains dedicated models per CWE tag and compares them against a
//! single global model on identical test data.

use crate::corpus::{self, CorpusError, FunctionSample};
use crate::cpg::{build_cpg, Cpg};
use crate::frontend::FrontendError;
use crate::ggnn::{self, GgnnError, ModelParams, TrainConfig};
use crate::vectorize::{
    build_corpus, pack_batches, tokenize_and_normalize, train_embeddings, vectorize_graph,
    EmbedMode, EmbedOptions, EmbeddingTable, VectorizeError, VectorizedGraph,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("scores ({scores}) and labels ({labels}) lengths differ")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("labels must be 0 or 1 (got {got} at index {index})")]
    InvalidLabel { index: usize, got: u8 },
    #[error("scores must be finite (score at index {index} is not)")]
    NonFiniteScore { index: usize },
    #[error("average precision is undefined without positive labels")]
    NoPositives,
    #[error("bag-of-tokens vocabulary is empty")]
    EmptyVocabulary,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("no CWE class has at least {min} positive samples")]
    NoEligibleClass { min: usize },
    #[error("sample '{sample_id}': {message}")]
    Sample { sample_id: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Ggnn(#[from] GgnnError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Confusion counts at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

/// Precision/recall/F1 with a flag marking zero-denominator fallbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// true when any of the three hit a 0/0 and was reported as 0.
    pub degenerate: bool,
}

/// The standard metrics bundle. Serializes to the report schema:
/// threshold, tp, fp, fn, tn, precision, recall, f1, ap (+ optional
/// pr_curve as [recall, precision] pairs).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Metrics {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pr_curve: Option<Vec<(f64, f64)>>,
}

impl Metrics {
    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.fn_ + self.tn;
        if total == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }
}

fn check_pairs(scores: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore { index });
    }
    if let Some(index) = labels.iter().position(|&l| l > 1) {
        return Err(EvalError::InvalidLabel { index, got: labels[index] });
    }
    Ok(())
}

/// Count the confusion matrix of `score ≥ threshold` predictions.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Confusion, EvalError> {
    check_pairs(scores, labels)?;
    let mut c = Confusion { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Harmonic mean of precision and recall (0 when both are 0).
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall, and F1 from counts; 0/0 cases yield 0 and set the
/// degenerate flag.
pub fn prf1(tp: usize, fp: usize, fn_: usize) -> Prf1 {
    let mut degenerate = false;
    let precision = if tp + fp == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        degenerate = true;
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if precision + recall == 0.0 {
        degenerate = true;
    }
    Prf1 { precision, recall, f1: f1_score(precision, recall), degenerate }
}

/// Rank items by descending score, processing tied scores as one group.
/// Yields (positives_in_group, group_size) per distinct score.
fn tie_groups(scores: &[f64], labels: &[u8]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Ties keep index order; sort is on the (finite) score only.
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut pos = 0;
        let mut size = 0;
        while i < order.len() && scores[order[i]] == s {
            pos += usize::from(labels[order[i]] == 1);
            size += 1;
            i += 1;
        }
        groups.push((pos, size));
    }
    groups
}

/// Average precision (step integration of the precision-recall curve):
/// descending over distinct scores, AP = Σ (R_i − R_{i−1}) · P_i.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check_pairs(scores, labels)?;
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    for (pos, size) in tie_groups(scores, labels) {
        tp += pos;
        seen += size;
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Precision-recall curve points, one (recall, precision) per distinct
/// score, in descending score order.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>, EvalError> {
    check_pairs(scores, labels)?;
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    for (pos, size) in tie_groups(scores, labels) {
        tp += pos;
        seen += size;
        points.push((tp as f64 / total_pos as f64, tp as f64 / seen as f64));
    }
    Ok(points)
}

/// The full metrics bundle at a threshold; optionally embeds the curve.
pub fn compute_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
    include_curve: bool,
) -> Result<Metrics, EvalError> {
    let c = confusion(scores, labels, threshold)?;
    let p = prf1(c.tp, c.fp, c.fn_);
    let ap = average_precision(scores, labels)?;
    let curve = if include_curve { Some(pr_curve(scores, labels)?) } else { None };
    Ok(Metrics {
        threshold,
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        tn: c.tn,
        precision: p.precision,
        recall: p.recall,
        f1: p.f1,
        ap,
        pr_curve: curve,
    })
}

/// Render a precision-recall curve as a standalone SVG file.
pub fn write_pr_curve_svg(curve: &[(f64, f64)], path: &Path) -> Result<(), EvalError> {
    let (w, h) = (640.0f64, 480.0f64);
    let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 50.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let x = |recall: f64| ml + recall * pw;
    let y = |precision: f64| mt + (1.0 - precision) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Grid and tick labels every 0.25.
    for i in 0..=4 {
        let t = i as f64 * 0.25;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            x(t),
            y(0.0),
            x(t),
            y(1.0)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            x(0.0),
            y(t),
            x(1.0),
            y(t)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{t}</text>\n",
            x(t),
            h - mb + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">{t}</text>\n",
            ml - 8.0,
            y(t) + 4.0
        ));
    }
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        h - mb
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\">Recall</text>\n",
        ml + pw / 2.0,
        h - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">Precision</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));
    // The curve itself, stepped: precision changes vertically at each new
    // recall level, matching the step integration used for AP.
    if !curve.is_empty() {
        let mut d = format!("M {:.2} {:.2}", x(0.0), y(curve[0].1));
        let mut prev_p = curve[0].1;
        for &(r, p) in curve {
            d.push_str(&format!(" L {:.2} {:.2}", x(r), y(prev_p)));
            d.push_str(&format!(" L {:.2} {:.2}", x(r), y(p)));
            prev_p = p;
        }
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");

    let mut file = std::fs::File::create(path)
        .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
    file.write_all(svg.as_bytes())
        .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Bag-of-tokens baseline
// ---------------------------------------------------------------------------

/// L2-regularized logistic regression over term-frequency vectors of
/// normalized source tokens. Serves as the classical-ML comparison floor.
pub struct BowModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    weights: Vec<f64>,
    bias: f64,
}

impl BowModel {
    /// Term-frequency vector over the training vocabulary (unknown tokens
    /// contribute to the length normalizer but not to any component).
    fn featurize(&self, tokens: &[String]) -> Vec<(usize, f64)> {
        if tokens.is_empty() {
            return Vec::new();
        }
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in tokens {
            if let Some(&i) = self.index.get(t) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        let mut feats: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c * inv)).collect();
        feats.sort_unstable_by_key(|&(i, _)| i);
        feats
    }

    pub fn score_tokens(&self, tokens: &[String]) -> f64 {
        let z: f64 = self
            .featurize(tokens)
            .iter()
            .map(|&(i, v)| self.weights[i] * v)
            .sum::<f64>()
            + self.bias;
        1.0 / (1.0 + (-z).exp())
    }

    pub fn score(&self, code: &str) -> Result<f64, FrontendError> {
        Ok(self.score_tokens(&tokenize_and_normalize(code)?))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

fn sample_tokens(s: &FunctionSample) -> Result<Vec<String>, EvalError> {
    tokenize_and_normalize(&s.code)
        .map_err(|e| EvalError::Sample { sample_id: s.id.clone(), message: e.to_string() })
}

/// Train the baseline classifier by full-batch gradient descent.
pub fn train_bow(train: &[FunctionSample], seed: u64) -> Result<BowModel, EvalError> {
    if train.is_empty() {
        return Err(EvalError::EmptySplit("training"));
    }
    // Vocabulary in first-appearance order over the training split.
    let token_lists: Vec<Vec<String>> =
        train.iter().map(sample_tokens).collect::<Result<_, _>>()?;
    let mut vocab = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for tokens in &token_lists {
        for t in tokens {
            if !index.contains_key(t) {
                index.insert(t.clone(), vocab.len());
                vocab.push(t.clone());
            }
        }
    }
    if vocab.is_empty() {
        return Err(EvalError::EmptyVocabulary);
    }

    let mut model = BowModel { vocab, index, weights: Vec::new(), bias: 0.0 };
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    model.weights = (0..model.vocab.len()).map(|_| rng.gen_range(-0.01..0.01)).collect();

    let features: Vec<Vec<(usize, f64)>> =
        token_lists.iter().map(|t| model.featurize(t)).collect();
    let labels: Vec<f64> = train.iter().map(|s| s.label as f64).collect();
    let n = train.len() as f64;
    let (epochs, lr, l2) = (300, 0.5, 1e-4);
    for _ in 0..epochs {
        let mut gw = vec![0.0f64; model.weights.len()];
        let mut gb = 0.0f64;
        for (feats, &y) in features.iter().zip(&labels) {
            let z: f64 =
                feats.iter().map(|&(i, v)| model.weights[i] * v).sum::<f64>() + model.bias;
            let err = 1.0 / (1.0 + (-z).exp()) - y;
            for &(i, v) in feats {
                gw[i] += err * v;
            }
            gb += err;
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= lr * (g / n + l2 * *w);
        }
        model.bias -= lr * gb / n;
    }
    Ok(model)
}

/// Train on `train`, evaluate on `test` at threshold 0.5.
pub fn bow_baseline(
    train: &[FunctionSample],
    test: &[FunctionSample],
    seed: u64,
) -> Result<Metrics, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptySplit("test"));
    }
    let model = train_bow(train, seed)?;
    let scores: Vec<f64> = test
        .iter()
        .map(|s| Ok(model.score_tokens(&sample_tokens(s)?)))
        .collect::<Result<_, EvalError>>()?;
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    compute_metrics(&scores, &labels, 0.5, false)
}

// ---------------------------------------------------------------------------
// End-to-end experiment runner and per-CWE harness
// ---------------------------------------------------------------------------

/// Everything needed to run one source-to-metrics experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub embed: EmbedOptions,
    pub mode: EmbedMode,
    pub ratios: (f64, f64, f64),
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            embed: EmbedOptions::default(),
            mode: EmbedMode::Average,
            ratios: (0.8, 0.1, 0.1),
            threshold: 0.5,
        }
    }
}

/// A trained classifier together with the vectorization artifacts needed
/// to score raw source functions.
pub struct TrainedModel {
    pub params: ModelParams<f32>,
    pub config: TrainConfig,
    pub table: EmbeddingTable,
    pub mode: EmbedMode,
}

impl TrainedModel {
    /// Positive-class probabilities for raw samples (parse → graph →
    /// vectors → network).
    pub fn score_samples(&self, samples: &[FunctionSample]) -> Result<Vec<f64>, EvalError> {
        let graphs = build_graphs(samples)?;
        let vectors: Vec<VectorizedGraph> =
            graphs.iter().map(|g| vectorize_graph(g, &self.table, self.mode)).collect();
        Ok(ggnn::score_graphs(&self.params, &self.config, &vectors)?)
    }
}

/// Outcome of `run_experiment`: test metrics plus the model itself.
pub struct ExperimentResult {
    pub metrics: Metrics,
    pub accuracy: f64,
    pub epochs_run: usize,
    pub best_val_f1: f64,
    pub model: TrainedModel,
}

fn build_graphs(samples: &[FunctionSample]) -> Result<Vec<Cpg>, EvalError> {
    samples
        .iter()
        .map(|s| {
            build_cpg(s).map_err(|e| EvalError::Sample {
                sample_id: s.id.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Split → embed (train split only) → vectorize → train → evaluate on the
/// test split. One seed controls the split, the embeddings, the packer,
/// and the network.
pub fn run_experiment(
    samples: &[FunctionSample],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ExperimentResult, EvalError> {
    let split = corpus::split_dataset(samples, cfg.ratios, seed)?;
    if split.train.is_empty() {
        return Err(EvalError::EmptySplit("training"));
    }
    if split.validate.is_empty() {
        return Err(EvalError::EmptySplit("validation"));
    }
    if split.test.is_empty() {
        return Err(EvalError::EmptySplit("test"));
    }

    let train_graphs = build_graphs(&split.train)?;
    let val_graphs = build_graphs(&split.validate)?;
    let test_graphs = build_graphs(&split.test)?;

    let sentences = build_corpus(&train_graphs)?;
    let embed_opts = EmbedOptions { seed, ..cfg.embed.clone() };
    let table = train_embeddings(&sentences, &embed_opts)?;

    let vec_of = |graphs: &[Cpg]| -> Vec<VectorizedGraph> {
        graphs.iter().map(|g| vectorize_graph(g, &table, cfg.mode)).collect()
    };
    let train_vecs = vec_of(&train_graphs);
    let val_vecs = vec_of(&val_graphs);
    let test_vecs = vec_of(&test_graphs);

    let train_config = TrainConfig { seed, ..cfg.train.clone() };
    let (batches, _report) = pack_batches(
        train_vecs,
        train_config.node_budget,
        train_config.max_nodes,
        seed,
        true,
    )?;
    let outcome = ggnn::train(&batches, &val_vecs, &train_config)?;

    let scores = ggnn::score_graphs(&outcome.params, &train_config, &test_vecs)?;
    let labels: Vec<u8> = split.test.iter().map(|s| s.label).collect();
    let metrics = compute_metrics(&scores, &labels, cfg.threshold, false)?;
    let accuracy = metrics.accuracy();

    Ok(ExperimentResult {
        metrics,
        accuracy,
        epochs_run: outcome.history.len(),
        best_val_f1: outcome.best_val_f1,
        model: TrainedModel {
            params: outcome.params,
            config: train_config,
            table,
            mode: cfg.mode,
        },
    })
}

/// Minimum positive count for a CWE tag to get its own model.
pub const MIN_CWE_POSITIVES: usize = 20;

/// One row of the per-vulnerability report. `skipped` carries the reason
/// when a tag was too small to train on.
#[derive(Debug, Clone, Serialize)]
pub struct CweEntry {
    pub positives: usize,
    pub negatives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dedicated: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dedicated_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global_accuracy: Option<f64>,
    /// dedicated_accuracy − global_accuracy on the same test samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy_delta: Option<f64>,
}

/// The per-vulnerability harness output: the global model's own test
/// metrics plus one entry per CWE tag, keyed by the tag.
#[derive(Debug, Serialize)]
pub struct PerVulnReport {
    pub global: Metrics,
    pub global_accuracy: f64,
    pub per_cwe: BTreeMap<String, CweEntry>,
}

/// Train one global model over all samples, then a dedicated model per CWE
/// tag (positives of that tag + label-0 samples rebalanced to 2:1
/// negative:positive). Both models are evaluated on the tag's test split,
/// so the accuracy delta compares like with like. Tags with fewer than
/// `MIN_CWE_POSITIVES` positives are reported as skipped.
pub fn per_vuln_harness(
    samples: &[FunctionSample],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<PerVulnReport, EvalError> {
    // Distinct tags among positive samples, in sorted order.
    let mut tags: Vec<String> = samples
        .iter()
        .filter(|s| s.label == 1)
        .filter_map(|s| s.cwe.clone())
        .collect();
    tags.sort();
    tags.dedup();
    if !tags
        .iter()
        .any(|t| samples.iter().filter(|s| s.label == 1 && s.cwe.as_deref() == Some(t)).count() >= MIN_CWE_POSITIVES)
    {
        return Err(EvalError::NoEligibleClass { min: MIN_CWE_POSITIVES });
    }

    let global = run_experiment(samples, cfg, seed)?;

    let mut per_cwe = BTreeMap::new();
    for (i, tag) in tags.iter().enumerate() {
        let tag_seed = seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let positives: Vec<FunctionSample> = samples
            .iter()
            .filter(|s| s.label == 1 && s.cwe.as_deref() == Some(tag.as_str()))
            .cloned()
            .collect();
        let negatives: Vec<FunctionSample> =
            samples.iter().filter(|s| s.label == 0).cloned().collect();
        let n_pos = positives.len();
        if n_pos < MIN_CWE_POSITIVES {
            per_cwe.insert(
                tag.clone(),
                CweEntry {
                    positives: n_pos,
                    negatives: negatives.len(),
                    skipped: Some(format!(
                        "only {n_pos} positive samples (need {MIN_CWE_POSITIVES})"
                    )),
                    dedicated: None,
                    dedicated_accuracy: None,
                    global: None,
                    global_accuracy: None,
                    accuracy_delta: None,
                },
            );
            continue;
        }

        let mut pool = positives;
        pool.extend(negatives);
        let dataset = corpus::rebalance(&pool, 2.0, tag_seed)?;
        let n_neg = dataset.iter().filter(|s| s.label == 0).count();

        let dedicated = run_experiment(&dataset, cfg, tag_seed)?;

        // Score the global model on the identical test split.
        let split = corpus::split_dataset(&dataset, cfg.ratios, tag_seed)?;
        let g_scores = global.model.score_samples(&split.test)?;
        let g_labels: Vec<u8> = split.test.iter().map(|s| s.label).collect();
        let g_metrics = compute_metrics(&g_scores, &g_labels, cfg.threshold, false)?;
        let g_acc = g_metrics.accuracy();

        per_cwe.insert(
            tag.clone(),
            CweEntry {
                positives: n_pos,
                negatives: n_neg,
                skipped: None,
                dedicated_accuracy: Some(dedicated.accuracy),
                accuracy_delta: Some(dedicated.accuracy - g_acc),
                dedicated: Some(dedicated.metrics),
                global_accuracy: Some(g_acc),
                global: Some(g_metrics),
            },
        );
    }

    Ok(PerVulnReport { global_accuracy: global.accuracy, global: global.metrics, per_cwe })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confusion_matches_hand_examples_and_brute_recount() {
        let c = confusion(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(c, Confusion { tp: 1, fp: 0, fn_: 0, tn: 1 });

        // Threshold 0 predicts everything positive.
        let c = confusion(&[0.9, 0.1, 0.4], &[1, 0, 1], 0.0).unwrap();
        assert_eq!((c.fn_, c.tn), (0, 0));
        assert_eq!((c.tp, c.fp), (2, 1));

        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let scores: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..50).map(|_| rng.gen_range(0..2) as u8).collect();
        let c = confusion(&scores, &labels, 0.37).unwrap();
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for i in 0..50 {
            if scores[i] >= 0.37 {
                if labels[i] == 1 { tp += 1 } else { fp += 1 }
            } else if labels[i] == 1 {
                fn_ += 1
            } else {
                tn += 1
            }
        }
        assert_eq!(c, Confusion { tp, fp, fn_, tn });
        assert_eq!(c.total(), 50);

        assert!(matches!(
            confusion(&[0.5], &[1, 0], 0.5),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion(&[0.5], &[3], 0.5),
            Err(EvalError::InvalidLabel { got: 3, .. })
        ));
    }

    #[test]
    fn prf1_formulas_and_degenerate_flag() {
        // precision 0.99, recall 0.74 → F1 rounds to 0.85.
        let f1 = f1_score(0.99, 0.74);
        assert!((f1 - 2.0 * 0.99 * 0.74 / (0.99 + 0.74)).abs() < 1e-12);
        assert_eq!(format!("{f1:.2}"), "0.85");

        let p = prf1(10, 0, 0);
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        assert!(!p.degenerate);

        let p = prf1(5, 0, 5);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);

        // No predicted positives: precision is 0/0.
        let p = prf1(0, 0, 5);
        assert_eq!(p.f1, 0.0);
        assert!(p.degenerate);

        // Nothing positive at all: both denominators empty.
        let p = prf1(0, 0, 0);
        assert!(p.degenerate);
    }

    #[test]
    fn average_precision_closed_forms() {
        // Perfect ranking.
        let ap = average_precision(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert!((ap - 1.0).abs() < 1e-12);

        // One positive ranked last of k=5 distinct scores → AP = 1/5.
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6, 0.5], &[0, 0, 0, 0, 1]).unwrap();
        assert!((ap - 0.2).abs() < 1e-12);

        // All scores identical → AP = positive prevalence.
        let ap = average_precision(&[0.5; 8], &[1, 0, 0, 1, 0, 0, 0, 0]).unwrap();
        assert!((ap - 0.25).abs() < 1e-12);

        assert!(matches!(
            average_precision(&[0.1, 0.2], &[0, 0]),
            Err(EvalError::NoPositives)
        ));
    }

    #[test]
    fn average_precision_equals_rank_mean_for_distinct_scores() {
        // With distinct scores, the step sum equals the mean of precision
        // at each positive's rank — an independent formulation.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(2..40);
            let mut scores: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                scores.swap(i, j);
            }
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
            if !labels.contains(&1) {
                continue;
            }
            let ap = average_precision(&scores, &labels).unwrap();

            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
            let total_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
            let mut tp = 0.0;
            let mut oracle = 0.0;
            for (rank, &i) in order.iter().enumerate() {
                if labels[i] == 1 {
                    tp += 1.0;
                    oracle += tp / (rank + 1) as f64;
                }
            }
            oracle /= total_pos;
            assert!((ap - oracle).abs() < 1e-12, "ap {ap} vs rank-mean {oracle}");
        }
    }

    #[test]
    fn pr_curve_groups_ties_and_ends_at_full_recall() {
        let curve = pr_curve(&[0.9, 0.5, 0.5, 0.1], &[1, 0, 1, 0]).unwrap();
        // Three distinct scores → three points; the tie group (0.5) is one.
        assert_eq!(curve.len(), 3);
        assert!((curve[0].0 - 0.5).abs() < 1e-12 && (curve[0].1 - 1.0).abs() < 1e-12);
        assert!((curve[1].0 - 1.0).abs() < 1e-12 && (curve[1].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((curve.last().unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn svg_curve_renders_points() {
        let curve = pr_curve(&[0.9, 0.7, 0.4, 0.2], &[1, 1, 0, 1]).unwrap();
        let dir = std::env::temp_dir().join(format!("eval-svg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pr.svg");
        write_pr_curve_svg(&curve, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.starts_with("<svg"));
        assert!(body.contains("Recall") && body.contains("Precision"));
        assert!(body.contains("<path"));
        std::fs::remove_dir_all(&dir).ok();
    }

    fn sample(id: &str, code: &str, label: u8) -> FunctionSample {
        FunctionSample {
            id: id.into(),
            code: code.into(),
            label,
            cwe: None,
            origin: "test".into(),
        }
    }

    #[test]
    fn bow_learns_a_separable_token() {
        // "memcpy" appears in every positive and no negative.
        let mut train = Vec::new();
        for i in 0..30 {
            train.push(sample(
                &format!("p{i}"),
                &format!("void f() {{ int a{i}; memcpy(dst, src, {i}); }}"),
                1,
            ));
            train.push(sample(
                &format!("n{i}"),
                &format!("void f() {{ int a{i}; printf(\"x\"); }}"),
                0,
            ));
        }
        let test: Vec<FunctionSample> = vec![
            sample("tp", "void g() { memcpy(a, b, 4); }", 1),
            sample("tn", "void g() { printf(\"y\"); }", 0),
            sample("tp2", "void g() { int q; memcpy(q, q, q); }", 1),
            sample("tn2", "void g() { int q; }", 0),
        ];
        let m = bow_baseline(&train, &test, 3).unwrap();
        assert_eq!(m.f1, 1.0, "separable token should be learned: {m:?}");

        // Determinism: identical seeds give identical metrics.
        let m2 = bow_baseline(&train, &test, 3).unwrap();
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            serde_json::to_string(&m2).unwrap()
        );
    }

    #[test]
    fn bow_rejects_empty_vocabulary() {
        let train = vec![sample("e", "", 0), sample("e2", "", 1)];
        let test = vec![sample("t", "", 0)];
        assert!(matches!(
            bow_baseline(&train, &test, 1),
            Err(EvalError::EmptyVocabulary)
        ));
    }

    #[test]
    fn metrics_serialize_to_the_pinned_schema() {
        let m = compute_metrics(&[0.9, 0.2, 0.7, 0.4], &[1, 0, 1, 0], 0.5, false).unwrap();
        // The report files use the streamed form, which keeps field order.
        let text = serde_json::to_string(&m).unwrap();
        let expected = ["threshold", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "ap"];
        let mut last = 0;
        for key in expected {
            let pos = text.find(&format!("\"{key}\":")).unwrap_or_else(|| {
                panic!("key {key:?} missing from {text}");
            });
            assert!(pos >= last, "key {key:?} out of order in {text}");
            last = pos;
        }
        assert_eq!(text.matches(':').count(), expected.len(), "extra keys in {text}");
        assert!(!text.contains("pr_curve"));

        let with_curve = compute_metrics(&[0.9, 0.2], &[1, 0], 0.5, true).unwrap();
        let json = serde_json::to_value(&with_curve).unwrap();
        assert!(json.as_object().unwrap().contains_key("pr_curve"));
        assert!(json["pr_curve"][0].is_array());

        // Round-trip: deserializing the streamed form reproduces the struct.
        let back: Metrics = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    /// A small configuration for smoke tests: tiny model, few epochs.
    fn smoke_config() -> ExperimentConfig {
        ExperimentConfig {
            train: TrainConfig {
                hidden_size: 24,
                timesteps: 3,
                epochs: 12,
                early_stop_patience: 4,
                ..TrainConfig::default()
            },
            embed: EmbedOptions { dim: 12, epochs: 2, ..EmbedOptions::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn experiment_learns_the_synthetic_corpus_and_is_deterministic() {
        let samples = corpus::generate_synthetic(220, 0.5, 11);
        let cfg = smoke_config();
        let r1 = run_experiment(&samples, &cfg, 5).unwrap();
        assert!(r1.epochs_run >= 1);
        assert!((0.0..=1.0).contains(&r1.best_val_f1));
        assert!(
            r1.metrics.f1 > 0.6,
            "tiny model should still beat chance on the synthetic corpus: {:?}",
            r1.metrics
        );

        let r2 = run_experiment(&samples, &cfg, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&r1.metrics).unwrap(),
            serde_json::to_string(&r2.metrics).unwrap(),
            "same seed must give identical metrics"
        );

        // The returned model scores raw source deterministically too.
        let s1 = r1.model.score_samples(&samples[..8]).unwrap();
        let s2 = r2.model.score_samples(&samples[..8]).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn harness_reports_every_tag_and_skips_small_ones() {
        let mut samples = corpus::generate_synthetic(200, 0.5, 19);
        // A rare tag below the positive-count threshold.
        for i in 0..3 {
            let mut s = samples.iter().find(|s| s.label == 1).unwrap().clone();
            s.id = format!("rare-{i}");
            s.cwe = Some("CWE-999".into());
            samples.push(s);
        }
        let cfg = smoke_config();
        let report = per_vuln_harness(&samples, &cfg, 7).unwrap();

        let tags: Vec<&str> = report.per_cwe.keys().map(String::as_str).collect();
        assert_eq!(tags, vec!["CWE-120", "CWE-787", "CWE-999"]);

        let rare = &report.per_cwe["CWE-999"];
        assert!(rare.skipped.as_deref().unwrap().contains("3 positive samples"));
        assert!(rare.dedicated.is_none() && rare.accuracy_delta.is_none());

        for tag in ["CWE-120", "CWE-787"] {
            let entry = &report.per_cwe[tag];
            assert!(entry.skipped.is_none(), "{tag} should qualify");
            assert!(entry.positives >= MIN_CWE_POSITIVES);
            // Rebalanced to 2:1 within rounding.
            let ratio = entry.negatives as f64 / entry.positives as f64;
            assert!((ratio - 2.0).abs() < 0.1, "{tag} ratio {ratio}");
            let delta = entry.accuracy_delta.unwrap();
            let dedicated = entry.dedicated_accuracy.unwrap();
            let global = entry.global_accuracy.unwrap();
            assert!((delta - (dedicated - global)).abs() < 1e-12);
            assert!(entry.dedicated.is_some() && entry.global.is_some());
        }

        // The report serializes keyed by CWE string.
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["per_cwe"].get("CWE-787").is_some());
    }

    #[test]
    fn harness_requires_one_sufficiently_large_class() {
        let mut samples = corpus::generate_synthetic(40, 0.3, 3);
        for s in &mut samples {
            if s.label == 1 {
                s.cwe = Some(format!("CWE-{}", s.id.len() % 7)); // scatter tags thin
            }
        }
        assert!(matches!(
            per_vuln_harness(&samples, &smoke_config(), 1),
            Err(EvalError::NoEligibleClass { min: MIN_CWE_POSITIVES })
        ));
    }
}
