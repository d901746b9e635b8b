//! End-to-end training of the gated graph neural network: corpus →
//! graphs → embeddings → node features → message-passing classifier,
//! with a checkpoint round-trip and single-function predictions at the
//! end.
//!
//!     cargo run --example train_classifier

use std::error::Error;
use std::path::Path;
use vulngraph::corpus::{generate_synthetic, split_dataset};
use vulngraph::cpg::{build_cpg, Cpg};
use vulngraph::eval::compute_metrics;
use vulngraph::ggnn::{
    self,
    checkpoint::{load_checkpoint, save_checkpoint},
    TrainConfig,
};
use vulngraph::vectorize::{
    build_corpus, pack_batches, train_embeddings, vectorize_graph, EmbedMode, EmbedOptions,
};

fn main() -> Result<(), Box<dyn Error>> {
    let seed = 3;
    let samples = generate_synthetic(400, 0.5, seed);
    let split = split_dataset(&samples, (0.8, 0.1, 0.1), seed)?;
    println!(
        "split: {} train / {} validate / {} test",
        split.train.len(),
        split.validate.len(),
        split.test.len()
    );

    let graphs_of = |part: &[vulngraph::corpus::FunctionSample]| -> Result<Vec<Cpg>, Box<dyn Error>> {
        Ok(part.iter().map(build_cpg).collect::<Result<_, _>>()?)
    };
    let train_graphs = graphs_of(&split.train)?;
    let val_graphs = graphs_of(&split.validate)?;
    let test_graphs = graphs_of(&split.test)?;

    // Embeddings learn from the training split only.
    let table = train_embeddings(
        &build_corpus(&train_graphs)?,
        &EmbedOptions { dim: 16, epochs: 4, seed, ..EmbedOptions::default() },
    )?;
    let vectors_of = |graphs: &[Cpg]| -> Vec<_> {
        graphs.iter().map(|g| vectorize_graph(g, &table, EmbedMode::Average)).collect()
    };
    let (train_vecs, val_vecs, test_vecs) =
        (vectors_of(&train_graphs), vectors_of(&val_graphs), vectors_of(&test_graphs));

    let config = TrainConfig {
        hidden_size: 32,
        timesteps: 4,
        epochs: 20,
        early_stop_patience: 4,
        seed,
        ..TrainConfig::default()
    };
    let (batches, report) =
        pack_batches(train_vecs, config.node_budget, config.max_nodes, seed, true)?;
    println!(
        "packed {} graphs into {} batches ({} oversized graphs dropped)\n",
        report.kept,
        batches.len(),
        report.excluded
    );

    let outcome = ggnn::train_with(&batches, &val_vecs, &config, &mut |s| {
        println!(
            "epoch {:>2}  loss {:.4}  val f1 {:.3}",
            s.epoch, s.train_loss, s.val_f1
        );
    })?;
    println!("best epoch: {} (val f1 {:.3})", outcome.best_epoch, outcome.best_val_f1);

    // Held-out metrics.
    let scores = ggnn::score_graphs(&outcome.params, &config, &test_vecs)?;
    let labels: Vec<u8> = test_vecs.iter().map(|g| g.label).collect();
    let m = compute_metrics(&scores, &labels, 0.5, false)?;
    println!(
        "\ntest: precision {:.3}  recall {:.3}  f1 {:.3}  ap {:.3}",
        m.precision, m.recall, m.f1, m.ap
    );

    // Checkpoints restore bit-identical parameters.
    let out = Path::new("target/example-output/train_classifier");
    std::fs::create_dir_all(out)?;
    let ckpt = out.join("model.ckpt");
    save_checkpoint(&outcome.params, &outcome.opt, &config, &ckpt)?;
    let (restored, _opt, restored_config) = load_checkpoint(&ckpt)?;
    let rescored = ggnn::score_graphs(&restored, &restored_config, &test_vecs)?;
    assert_eq!(scores, rescored, "restored model must score identically");
    println!("checkpoint round-trip ok -> {}", ckpt.display());

    // Classify one vulnerable function and its structurally matched twin.
    let i = split.test.iter().position(|s| s.label == 1).unwrap_or(0);
    for sample in [&split.test[i], &split.test[split.test.iter().position(|s| s.label == 0).unwrap_or(0)]] {
        let graph = vectorize_graph(&build_cpg(sample)?, &table, EmbedMode::Average);
        let (label, confidence) = ggnn::predict(&outcome.params, &config, &graph, 0.5)?;
        println!(
            "{}: predicted {} (confidence {:.3}), actual {}",
            sample.id,
            if label == 1 { "vulnerable" } else { "healthy" },
            confidence,
            if sample.label == 1 { "vulnerable" } else { "healthy" },
        );
    }
    Ok(())
}
