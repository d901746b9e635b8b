//! Train skip-gram token embeddings from scratch on graph-derived
//! sentences and poke at the learned vector space.
//!
//! Every graph contributes one sentence: its AST nodes in preorder, each
//! emitting its type name and, for leaves, its normalized code tokens
//! (user identifiers collapse to "ID"; standard library names survive).
//!
//!     cargo run --example train_embeddings

use std::error::Error;
use std::path::Path;
use vulngraph::corpus::generate_synthetic;
use vulngraph::cpg::build_cpg;
use vulngraph::vectorize::{build_corpus, train_embeddings, EmbedOptions};

fn main() -> Result<(), Box<dyn Error>> {
    let samples = generate_synthetic(300, 0.5, 21);
    let graphs: Vec<_> = samples
        .iter()
        .map(build_cpg)
        .collect::<Result<_, _>>()?;
    let sentences = build_corpus(&graphs)?;
    println!(
        "corpus: {} sentences, {} tokens total",
        sentences.len(),
        sentences.iter().map(Vec::len).sum::<usize>()
    );
    println!("sentence head: {:?}...", &sentences[0][..12.min(sentences[0].len())]);

    let opts = EmbedOptions { dim: 24, epochs: 8, seed: 21, ..EmbedOptions::default() };
    let table = train_embeddings(&sentences, &opts)?;
    println!("\ntrained {} vectors of dim {}", table.tokens.len(), table.dim);

    // Co-occurrence structure is visible in cosine space: tokens that fill
    // the same grammatical slots end up near each other.
    for probe in ["memset", "int", "Condition", "ID"] {
        let neighbours = table.nearest(probe, 4);
        if neighbours.is_empty() {
            continue;
        }
        let list: Vec<String> = neighbours
            .iter()
            .map(|(t, sim)| format!("{t} ({sim:.2})"))
            .collect();
        println!("nearest to {probe:<10}: {}", list.join(", "));
    }

    // Unknown tokens get the mean vector by default, so unseen code still
    // produces finite features.
    let unk = table.unk();
    println!("\nUNK vector norm: {:.4}", unk.iter().map(|x| x * x).sum::<f32>().sqrt());

    let out = Path::new("target/example-output/train_embeddings");
    std::fs::create_dir_all(out)?;
    let path = out.join("embeddings.json");
    table.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
