//! Thin batch CLI over [`vulngraph::pipeline`]. All logic lives in the
//! library; this binary parses flags, applies config overrides, runs one
//! stage, and prints its summary.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use vulngraph::config::{ConfigError, PipelineConfig};
use vulngraph::pipeline::{self, CpgSource, EvalOptions, PipelineError};

#[derive(Parser)]
#[command(
    name = "vulngraph",
    version,
    about = "Graph-based vulnerability detection for C functions",
    after_help = "Config precedence: defaults < --config file < --set/--seed/flags."
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Suppress progress output; results and errors still print.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override any config key, e.g. --set epochs=10 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and split it into JSONL files.
    Gen {
        /// Number of functions to generate.
        #[arg(long)]
        count: Option<usize>,
        /// Fraction of vulnerable functions.
        #[arg(long = "vuln-ratio")]
        vuln_ratio: Option<f64>,
        /// Output directory for the split files and manifest.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Build code property graphs (from the dataset splits by default).
    Cpg {
        /// Build one graph from a single C source file instead.
        #[arg(long, value_name = "FILE")]
        source: Option<PathBuf>,
        /// Import one graph from Joern-style TSV tables instead.
        #[arg(long = "import-joern", num_args = 2, value_names = ["NODES", "EDGES"])]
        import_joern: Option<Vec<PathBuf>>,
        /// Also write one Graphviz .dot file per graph into this directory.
        #[arg(long, value_name = "DIR")]
        dot: Option<PathBuf>,
        /// Keep going past per-sample failures (reported as warnings).
        #[arg(long = "skip-errors")]
        skip_errors: bool,
    },
    /// Train token embeddings on the training split.
    Embed,
    /// Turn every split's graphs into feature vectors.
    Vectorize,
    /// Train the classifier; prints one line per epoch.
    Train,
    /// Score the test split and write the metrics report.
    Eval {
        /// Also train and score the bag-of-tokens baseline.
        #[arg(long)]
        baseline: bool,
        /// Also run the per-CWE harness (retrains; slow).
        #[arg(long = "per-cwe")]
        per_cwe: bool,
        /// Write the PR curve (embedded in the report and as SVG).
        #[arg(long)]
        curve: bool,
    },
    /// Classify a single C source file with the trained model.
    Predict {
        /// The C function to classify.
        #[arg(value_name = "FILE")]
        source: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("--set expects KEY=VALUE, got {0:?}")]
    BadOverride(String),
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Pipeline(PipelineError::CpgFailures { total, failures })) => {
            for (id, message) in &failures {
                eprintln!("error: sample '{id}': {message}");
            }
            eprintln!("error: {} of {total} samples failed graph construction", failures.len());
            std::process::exit(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.set {
        let (key, value) =
            kv.split_once('=').ok_or_else(|| CliError::BadOverride(kv.clone()))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let quiet = cli.quiet;

    match cli.command {
        Command::Gen { count, vuln_ratio, out } => {
            if let Some(count) = count {
                cfg.count = count;
            }
            if let Some(ratio) = vuln_ratio {
                cfg.vuln_ratio = ratio;
            }
            if let Some(out) = out {
                cfg.dataset_dir = out;
            }
            cfg.validate()?;
            let summary = pipeline::stage_gen(&cfg)?;
            if !quiet {
                for s in &summary.splits {
                    println!(
                        "{}: {} samples ({} vulnerable, {} healthy)",
                        s.file, s.total, s.positives, s.negatives
                    );
                }
                println!("wrote {}", summary.dir.join("manifest.json").display());
            }
        }
        Command::Cpg { source, import_joern, dot, skip_errors } => {
            cfg.validate()?;
            let source = match (source, import_joern) {
                (Some(file), None) => CpgSource::File(file),
                (None, Some(tables)) => {
                    let mut it = tables.into_iter();
                    CpgSource::Joern {
                        nodes: it.next().expect("clap enforces two values"),
                        edges: it.next().expect("clap enforces two values"),
                    }
                }
                (None, None) => CpgSource::Dataset,
                (Some(_), Some(_)) => {
                    return Err(CliError::BadOverride(
                        "--source and --import-joern are mutually exclusive".into(),
                    ))
                }
            };
            let summary = pipeline::stage_cpg(&cfg, source, skip_errors, dot.as_deref())?;
            for (id, message) in &summary.failures {
                eprintln!("warning: sample '{id}': {message}");
            }
            if !quiet {
                for (path, n) in &summary.written {
                    println!("{}: {n} graphs", path.display());
                }
                if summary.dot_files > 0 {
                    println!("wrote {} .dot files", summary.dot_files);
                }
            }
        }
        Command::Embed => {
            cfg.validate()?;
            let summary = pipeline::stage_embed(&cfg)?;
            if !quiet {
                println!(
                    "trained {}-dim embeddings for {} tokens on {} sentences",
                    summary.dim, summary.vocab, summary.sentences
                );
                println!("wrote {}", summary.path.display());
            }
        }
        Command::Vectorize => {
            cfg.validate()?;
            let summary = pipeline::stage_vectorize(&cfg)?;
            if !quiet {
                for (name, n) in &summary.counts {
                    println!("{name}: {n} graphs vectorized");
                }
                println!(
                    "feature width {} -> {}",
                    summary.feature_width,
                    summary.dir.display()
                );
            }
        }
        Command::Train => {
            cfg.validate()?;
            let mut on_epoch = |s: &vulngraph::ggnn::EpochStats| {
                if !quiet {
                    println!(
                        "epoch {:>3}  loss {:.4}  val precision {:.3} recall {:.3} f1 {:.3}",
                        s.epoch, s.train_loss, s.val_precision, s.val_recall, s.val_f1
                    );
                }
            };
            let summary = pipeline::stage_train(&cfg, &mut on_epoch)?;
            if summary.excluded > 0 {
                eprintln!(
                    "warning: excluded {} oversized graphs (> {} nodes)",
                    summary.excluded, cfg.max_nodes
                );
            }
            if !quiet {
                println!(
                    "best epoch {} (val f1 {:.3}) -> {}",
                    summary.best_epoch,
                    summary.best_val_f1,
                    summary.checkpoint.display()
                );
            }
        }
        Command::Eval { baseline, per_cwe, curve } => {
            cfg.validate()?;
            let summary =
                pipeline::stage_eval(&cfg, EvalOptions { baseline, per_cwe, curve })?;
            let m = &summary.metrics;
            println!(
                "precision {:.4}  recall {:.4}  f1 {:.4}  ap {:.4}  accuracy {:.4}",
                m.precision, m.recall, m.f1, m.ap, summary.accuracy
            );
            if let Some(b) = &summary.baseline {
                println!(
                    "baseline (bag of tokens): precision {:.4}  recall {:.4}  f1 {:.4}  ap {:.4}",
                    b.precision, b.recall, b.f1, b.ap
                );
            }
            if !quiet {
                println!("wrote {}", summary.metrics_path.display());
                for path in [&summary.baseline_path, &summary.per_cwe_path, &summary.curve_path]
                    .into_iter()
                    .flatten()
                {
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Predict { source } => {
            cfg.validate()?;
            let summary = pipeline::stage_predict(&cfg, &source)?;
            println!("{} (confidence {:.4})", summary.verdict(), summary.confidence);
        }
    }
    Ok(())
}
