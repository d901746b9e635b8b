//! File-based pipeline stages: generate → graphs → embeddings → vectors →
//! train → evaluate → predict. Each stage reads the artifacts of the
//! previous one from the paths in [`PipelineConfig`] and writes its own,
//! so stages can be re-run independently and are idempotent given the
//! same inputs and seed.

use crate::config::{ConfigError, PipelineConfig};
use crate::corpus::{self, CorpusError, FunctionSample};
use crate::cpg::{build_cpg, export_dot, import_joern, Cpg, CpgError};
use crate::eval::{
    bow_baseline, compute_metrics, per_vuln_harness, write_pr_curve_svg, EvalError,
    ExperimentConfig, Metrics,
};
use crate::ggnn::{self, EpochStats, GgnnError};
use crate::vectorize::{
    build_corpus, load_vectorized, pack_batches, save_vectorized, train_embeddings, EmbedMode,
    EmbeddingTable, VectorizeError, VectorizedGraph,
};
use serde::Serialize;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub const SPLIT_NAMES: [&str; 3] = ["train", "validate", "test"];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing {what} at {} — run `vulngraph {hint}` first", path.display())]
    Missing { what: &'static str, path: PathBuf, hint: &'static str },
    #[error("{} of {} samples failed graph construction (first: {} — {})",
            failures.len(), total, failures[0].0, failures[0].1)]
    CpgFailures { total: usize, failures: Vec<(String, String)> },
    #[error(
        "embedding table (dim {table_dim}) does not produce the checkpoint's \
         feature width {feature_dim}"
    )]
    EmbeddingMismatch { table_dim: usize, feature_dim: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Cpg(#[from] CpgError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Ggnn(#[from] GgnnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

fn require(path: &Path, what: &'static str, hint: &'static str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Missing { what, path: path.to_path_buf(), hint })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

// --- gen ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SplitCounts {
    pub file: String,
    pub total: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// Written next to the split files so downstream users can sanity-check
/// counts without parsing the JSONL.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: usize,
    pub vuln_ratio: f64,
    pub splits: Vec<SplitCounts>,
}

#[derive(Debug)]
pub struct GenSummary {
    pub dir: PathBuf,
    pub splits: Vec<SplitCounts>,
}

/// Generate the synthetic corpus, split it, and write one JSONL per split
/// plus `manifest.json`.
pub fn stage_gen(cfg: &PipelineConfig) -> Result<GenSummary, PipelineError> {
    let samples = corpus::generate_synthetic(cfg.count, cfg.vuln_ratio, cfg.seed);
    let split = corpus::split_dataset(&samples, cfg.ratios(), cfg.seed)?;
    std::fs::create_dir_all(&cfg.dataset_dir).map_err(io_err(&cfg.dataset_dir))?;

    let mut counts = Vec::new();
    for (name, part) in
        SPLIT_NAMES.iter().zip([&split.train, &split.validate, &split.test])
    {
        let file = format!("{name}.jsonl");
        corpus::save_dataset(cfg.dataset_dir.join(&file), part)?;
        counts.push(SplitCounts {
            file,
            total: part.len(),
            positives: part.iter().filter(|s| s.label == 1).count(),
            negatives: part.iter().filter(|s| s.label == 0).count(),
        });
    }
    let manifest = Manifest {
        seed: cfg.seed,
        count: cfg.count,
        vuln_ratio: cfg.vuln_ratio,
        splits: counts.clone(),
    };
    write_json(&cfg.dataset_dir.join("manifest.json"), &manifest)?;
    Ok(GenSummary { dir: cfg.dataset_dir.clone(), splits: counts })
}

fn load_split(cfg: &PipelineConfig, name: &str) -> Result<Vec<FunctionSample>, PipelineError> {
    let path = cfg.dataset_dir.join(format!("{name}.jsonl"));
    require(&path, "dataset split", "gen")?;
    Ok(corpus::load_dataset(&path)?)
}

// --- cpg ---------------------------------------------------------------------

/// Where `stage_cpg` takes its input from.
pub enum CpgSource {
    /// The three dataset splits written by `stage_gen`.
    Dataset,
    /// A single C source file; the graph file is named after its stem.
    File(PathBuf),
    /// Joern-style nodes/edges TSV tables.
    Joern { nodes: PathBuf, edges: PathBuf },
}

#[derive(Debug)]
pub struct CpgSummary {
    /// (graph file, graphs written) per output.
    pub written: Vec<(PathBuf, usize)>,
    /// (sample id, error) for samples that failed, when skipping errors.
    pub failures: Vec<(String, String)>,
    pub dot_files: usize,
}

fn save_graphs(path: &Path, graphs: &[Cpg]) -> Result<(), PipelineError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    for g in graphs {
        serde_json::to_writer(&mut out, g).map_err(|e| io_err(path)(e.into()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Read one [`Cpg`] per line.
pub fn load_graphs(path: &Path) -> Result<Vec<Cpg>, PipelineError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    std::io::BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(io_err(path))?;
            serde_json::from_str(&line).map_err(|e| io_err(path)(e.into()))
        })
        .collect()
}

fn write_dots(dot_dir: &Path, graphs: &[Cpg]) -> Result<usize, PipelineError> {
    std::fs::create_dir_all(dot_dir).map_err(io_err(dot_dir))?;
    for g in graphs {
        let path = dot_dir.join(format!("{}.dot", g.sample_id));
        std::fs::write(&path, export_dot(g)).map_err(io_err(&path))?;
    }
    Ok(graphs.len())
}

/// Build code property graphs and write them as JSONL, one graph per line.
/// Per-sample failures abort with ids unless `skip_errors`, in which case
/// they are listed in the summary and the good graphs are still written.
pub fn stage_cpg(
    cfg: &PipelineConfig,
    source: CpgSource,
    skip_errors: bool,
    dot_dir: Option<&Path>,
) -> Result<CpgSummary, PipelineError> {
    std::fs::create_dir_all(&cfg.graphs_dir).map_err(io_err(&cfg.graphs_dir))?;
    let mut summary = CpgSummary { written: Vec::new(), failures: Vec::new(), dot_files: 0 };

    let mut outputs: Vec<(PathBuf, Vec<Cpg>)> = Vec::new();
    match source {
        CpgSource::Dataset => {
            for name in SPLIT_NAMES {
                let samples = load_split(cfg, name)?;
                let total = samples.len();
                let mut graphs = Vec::with_capacity(total);
                for s in &samples {
                    match build_cpg(s) {
                        Ok(g) => graphs.push(g),
                        Err(e) => summary.failures.push((s.id.clone(), e.to_string())),
                    }
                }
                if !summary.failures.is_empty() && !skip_errors {
                    return Err(PipelineError::CpgFailures {
                        total,
                        failures: std::mem::take(&mut summary.failures),
                    });
                }
                outputs.push((cfg.graphs_dir.join(format!("{name}.jsonl")), graphs));
            }
        }
        CpgSource::File(path) => {
            let code = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "function".into());
            let sample = FunctionSample {
                id: id.clone(),
                code,
                label: 0,
                cwe: None,
                origin: path.display().to_string(),
            };
            let graph = build_cpg(&sample)?;
            outputs.push((cfg.graphs_dir.join(format!("{id}.jsonl")), vec![graph]));
        }
        CpgSource::Joern { nodes, edges } => {
            require(&nodes, "Joern nodes table", "cpg")?;
            require(&edges, "Joern edges table", "cpg")?;
            let graph = import_joern(&nodes, &edges)?;
            let file = format!("{}.jsonl", graph.sample_id);
            outputs.push((cfg.graphs_dir.join(file), vec![graph]));
        }
    }

    for (path, graphs) in &outputs {
        save_graphs(path, graphs)?;
        if let Some(dir) = dot_dir {
            summary.dot_files += write_dots(dir, graphs)?;
        }
        summary.written.push((path.clone(), graphs.len()));
    }
    Ok(summary)
}

fn load_split_graphs(cfg: &PipelineConfig, name: &str) -> Result<Vec<Cpg>, PipelineError> {
    let path = cfg.graphs_dir.join(format!("{name}.jsonl"));
    require(&path, "graph file", "cpg")?;
    load_graphs(&path)
}

// --- embed -------------------------------------------------------------------

#[derive(Debug)]
pub struct EmbedSummary {
    pub path: PathBuf,
    pub vocab: usize,
    pub dim: usize,
    pub sentences: usize,
}

/// Train token embeddings on the training split only (the held-out splits
/// must not influence the vocabulary or the vectors).
pub fn stage_embed(cfg: &PipelineConfig) -> Result<EmbedSummary, PipelineError> {
    let graphs = load_split_graphs(cfg, "train")?;
    let sentences = build_corpus(&graphs)?;
    let table = train_embeddings(&sentences, &cfg.embed_options())?;
    if let Some(parent) = cfg.embeddings_path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(&cfg.embeddings_path))?;
    }
    table.save(&cfg.embeddings_path)?;
    Ok(EmbedSummary {
        path: cfg.embeddings_path.clone(),
        vocab: table.tokens.len(),
        dim: table.dim,
        sentences: sentences.len(),
    })
}

// --- vectorize ---------------------------------------------------------------

#[derive(Debug)]
pub struct VectorizeSummary {
    pub dir: PathBuf,
    pub feature_width: usize,
    /// (split, graphs) per split.
    pub counts: Vec<(String, usize)>,
}

/// Turn every split's graphs into per-node feature vectors using the
/// saved embedding table.
pub fn stage_vectorize(cfg: &PipelineConfig) -> Result<VectorizeSummary, PipelineError> {
    require(&cfg.embeddings_path, "embedding table", "embed")?;
    let table = EmbeddingTable::load(&cfg.embeddings_path)?;
    std::fs::create_dir_all(&cfg.vectors_dir).map_err(io_err(&cfg.vectors_dir))?;

    let mut counts = Vec::new();
    for name in SPLIT_NAMES {
        let graphs = load_split_graphs(cfg, name)?;
        let vectors: Vec<VectorizedGraph> = graphs
            .iter()
            .map(|g| crate::vectorize::vectorize_graph(g, &table, cfg.vector_mode))
            .collect();
        save_vectorized(cfg.vectors_dir.join(format!("{name}.jsonl")), &vectors)?;
        counts.push((name.to_string(), vectors.len()));
    }
    Ok(VectorizeSummary {
        dir: cfg.vectors_dir.clone(),
        feature_width: cfg.vector_mode.feature_width(table.dim),
        counts,
    })
}

fn load_split_vectors(
    cfg: &PipelineConfig,
    name: &str,
) -> Result<Vec<VectorizedGraph>, PipelineError> {
    let path = cfg.vectors_dir.join(format!("{name}.jsonl"));
    require(&path, "vector file", "vectorize")?;
    Ok(load_vectorized(&path)?)
}

// --- train -------------------------------------------------------------------

#[derive(Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Graphs dropped for exceeding `max_nodes`.
    pub excluded: usize,
    pub excluded_ids: Vec<String>,
}

/// Train the classifier on the train/validate vectors and checkpoint the
/// best-validation parameters. `on_epoch` observes each epoch's stats.
pub fn stage_train(
    cfg: &PipelineConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainSummary, PipelineError> {
    let train_vecs = load_split_vectors(cfg, "train")?;
    let val_vecs = load_split_vectors(cfg, "validate")?;
    let train_config = cfg.train_config();
    let (batches, report) = pack_batches(
        train_vecs,
        train_config.node_budget,
        train_config.max_nodes,
        cfg.seed,
        true,
    )?;
    let outcome = ggnn::train_with(&batches, &val_vecs, &train_config, on_epoch)?;
    if let Some(parent) = cfg.checkpoint_path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(&cfg.checkpoint_path))?;
    }
    ggnn::checkpoint::save_checkpoint(
        &outcome.params,
        &outcome.opt,
        &train_config,
        &cfg.checkpoint_path,
    )?;
    Ok(TrainSummary {
        checkpoint: cfg.checkpoint_path.clone(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_f1: outcome.best_val_f1,
        excluded: report.excluded,
        excluded_ids: report.excluded_ids,
    })
}

// --- eval --------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Also train and score the bag-of-tokens baseline.
    pub baseline: bool,
    /// Also run the per-CWE harness (retrains; slow).
    pub per_cwe: bool,
    /// Embed the PR curve in the report and render it as SVG.
    pub curve: bool,
}

#[derive(Debug)]
pub struct EvalSummary {
    pub metrics: Metrics,
    pub accuracy: f64,
    pub metrics_path: PathBuf,
    pub baseline: Option<Metrics>,
    pub baseline_path: Option<PathBuf>,
    pub per_cwe_path: Option<PathBuf>,
    pub curve_path: Option<PathBuf>,
}

/// Score the checkpoint on the test vectors and write `metrics.json`
/// (plus optional baseline, per-CWE, and PR-curve artifacts).
pub fn stage_eval(cfg: &PipelineConfig, opts: EvalOptions) -> Result<EvalSummary, PipelineError> {
    require(&cfg.checkpoint_path, "model checkpoint", "train")?;
    let (params, _opt, train_config) =
        ggnn::checkpoint::load_checkpoint(&cfg.checkpoint_path)?;
    let test_vecs = load_split_vectors(cfg, "test")?;
    let scores = ggnn::score_graphs(&params, &train_config, &test_vecs)?;
    let labels: Vec<u8> = test_vecs.iter().map(|g| g.label).collect();
    let metrics = compute_metrics(&scores, &labels, cfg.threshold, opts.curve)?;
    let accuracy = metrics.accuracy();

    std::fs::create_dir_all(&cfg.reports_dir).map_err(io_err(&cfg.reports_dir))?;
    let metrics_path = cfg.reports_dir.join("metrics.json");
    write_json(&metrics_path, &metrics)?;

    let curve_path = match (&metrics.pr_curve, opts.curve) {
        (Some(curve), true) => {
            let path = cfg.reports_dir.join("pr_curve.svg");
            write_pr_curve_svg(curve, &path)?;
            Some(path)
        }
        _ => None,
    };

    let (baseline, baseline_path) = if opts.baseline {
        let train_samples = load_split(cfg, "train")?;
        let test_samples = load_split(cfg, "test")?;
        let m = bow_baseline(&train_samples, &test_samples, cfg.seed)?;
        let path = cfg.reports_dir.join("baseline.json");
        write_json(&path, &m)?;
        (Some(m), Some(path))
    } else {
        (None, None)
    };

    let per_cwe_path = if opts.per_cwe {
        let mut samples = load_split(cfg, "train")?;
        samples.extend(load_split(cfg, "validate")?);
        samples.extend(load_split(cfg, "test")?);
        let experiment = ExperimentConfig {
            train: cfg.train_config(),
            embed: cfg.embed_options(),
            mode: cfg.vector_mode,
            ratios: cfg.ratios(),
            threshold: cfg.threshold,
        };
        let report = per_vuln_harness(&samples, &experiment, cfg.seed)?;
        let path = cfg.reports_dir.join("per_cwe.json");
        write_json(&path, &report)?;
        Some(path)
    } else {
        None
    };

    Ok(EvalSummary {
        metrics,
        accuracy,
        metrics_path,
        baseline,
        baseline_path,
        per_cwe_path,
        curve_path,
    })
}

// --- predict -----------------------------------------------------------------

#[derive(Debug)]
pub struct PredictSummary {
    pub id: String,
    pub label: u8,
    pub confidence: f64,
}

impl PredictSummary {
    pub fn verdict(&self) -> &'static str {
        if self.label == 1 {
            "vulnerable"
        } else {
            "healthy"
        }
    }
}

/// Classify one C source file with the saved embeddings and checkpoint.
pub fn stage_predict(
    cfg: &PipelineConfig,
    source: &Path,
) -> Result<PredictSummary, PipelineError> {
    require(&cfg.embeddings_path, "embedding table", "embed")?;
    require(&cfg.checkpoint_path, "model checkpoint", "train")?;

    let code = std::fs::read_to_string(source).map_err(io_err(source))?;
    let id = source
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "function".into());
    let sample =
        FunctionSample { id: id.clone(), code, label: 0, cwe: None, origin: source.display().to_string() };
    let graph = build_cpg(&sample)?;

    let table = EmbeddingTable::load(&cfg.embeddings_path)?;
    let (params, _opt, train_config) =
        ggnn::checkpoint::load_checkpoint(&cfg.checkpoint_path)?;

    // The checkpoint stores the feature width; recover the vectorizer
    // mode from how it relates to the table dimension.
    let feature_dim = params.meta.features;
    let mode = if feature_dim == table.dim {
        EmbedMode::Average
    } else if feature_dim == 2 * table.dim {
        EmbedMode::Concat
    } else {
        return Err(PipelineError::EmbeddingMismatch {
            table_dim: table.dim,
            feature_dim,
        });
    };

    let vectorized = crate::vectorize::vectorize_graph(&graph, &table, mode);
    let (label, confidence) =
        ggnn::predict(&params, &train_config, &vectorized, cfg.threshold)?;
    Ok(PredictSummary { id, label, confidence })
}

// --- whole pipeline ----------------------------------------------------------

/// Run every stage in order and return the final metrics together with
/// the exact bytes of `metrics.json` (for byte-level determinism checks).
pub fn run_all(
    cfg: &PipelineConfig,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<(Metrics, Vec<u8>), PipelineError> {
    stage_gen(cfg)?;
    stage_cpg(cfg, CpgSource::Dataset, false, None)?;
    stage_embed(cfg)?;
    stage_vectorize(cfg)?;
    stage_train(cfg, on_epoch)?;
    let summary = stage_eval(cfg, EvalOptions::default())?;
    let bytes = std::fs::read(&summary.metrics_path).map_err(io_err(&summary.metrics_path))?;
    Ok((summary.metrics, bytes))
}
