//! Compare the graph classifier against a bag-of-tokens logistic
//! regression on the same corpus and splits.
//!
//! The synthetic generator emits each vulnerable function alongside a
//! safe twin with near-identical token statistics, so a classifier that
//! only counts tokens has almost nothing to work with — the signal lives
//! in the graph structure (which definition reaches the buffer write).
//!
//!     cargo run --example evaluate_baseline

use std::error::Error;
use std::path::Path;
use vulngraph::corpus::{generate_synthetic, split_dataset};
use vulngraph::eval::{bow_baseline, pr_curve, write_pr_curve_svg, ExperimentConfig, Metrics};
use vulngraph::ggnn::TrainConfig;
use vulngraph::vectorize::EmbedOptions;

fn row(name: &str, m: &Metrics) {
    println!(
        "{name:<18} {:>9.3} {:>6.3} {:>6.3} {:>6.3}",
        m.precision, m.recall, m.f1, m.ap
    );
}

fn main() -> Result<(), Box<dyn Error>> {
    let seed = 17;
    let samples = generate_synthetic(500, 0.5, seed);

    let cfg = ExperimentConfig {
        train: TrainConfig {
            hidden_size: 32,
            timesteps: 4,
            epochs: 30,
            early_stop_patience: 6,
            ..TrainConfig::default()
        },
        embed: EmbedOptions { dim: 16, epochs: 4, ..EmbedOptions::default() },
        ..ExperimentConfig::default()
    };

    println!("training the graph classifier...");
    let result = vulngraph::eval::run_experiment(&samples, &cfg, seed)?;

    println!("training the bag-of-tokens baseline on the same split...");
    let split = split_dataset(&samples, cfg.ratios, seed)?;
    let baseline = bow_baseline(&split.train, &split.test, seed)?;

    println!("\n{:<18} {:>9} {:>6} {:>6} {:>6}", "", "precision", "recall", "f1", "ap");
    row("graph network", &result.metrics);
    row("bag of tokens", &baseline);
    println!(
        "\nf1 advantage of graph features: {:+.3}",
        result.metrics.f1 - baseline.f1
    );

    // Render the network's precision-recall curve.
    let scores = result.model.score_samples(&split.test)?;
    let labels: Vec<u8> = split.test.iter().map(|s| s.label).collect();
    let curve = pr_curve(&scores, &labels)?;
    let out = Path::new("target/example-output/evaluate_baseline");
    std::fs::create_dir_all(out)?;
    let svg = out.join("pr_curve.svg");
    write_pr_curve_svg(&curve, &svg)?;
    println!("wrote {}", svg.display());
    Ok(())
}
