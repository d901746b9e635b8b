//! Generate a labeled synthetic corpus of C functions, split it into
//! train/validate/test, and rebalance the class ratio.
//!
//!     cargo run --example generate_corpus
//!
//! Artifacts land in `target/example-output/generate_corpus/`.

use std::error::Error;
use std::path::Path;
use vulngraph::corpus::{generate_synthetic, load_dataset, rebalance, save_dataset, split_dataset};

fn main() -> Result<(), Box<dyn Error>> {
    let out = Path::new("target/example-output/generate_corpus");
    std::fs::create_dir_all(out)?;

    // Half the functions contain a seeded buffer overflow; each comes with
    // a structurally matched safe twin so token statistics can't give the
    // label away.
    let samples = generate_synthetic(200, 0.5, 7);
    let positives = samples.iter().filter(|s| s.label == 1).count();
    println!("generated {} functions ({} vulnerable)", samples.len(), positives);

    // Pairs are adjacent in generation order: unsafe first, then its twin.
    let i = samples.iter().position(|s| s.label == 1).unwrap();
    let (vulnerable, safe) = (&samples[i], &samples[i + 1]);
    println!(
        "\n--- a vulnerable sample ({}, {}) ---",
        vulnerable.id,
        vulnerable.cwe.as_deref().unwrap_or("untagged")
    );
    println!("{}", vulnerable.code);
    println!("--- its safe counterpart ({}) ---", safe.id);
    println!("{}", safe.code);

    // Stratified 80:10:10 split, deterministic in the seed.
    let split = split_dataset(&samples, (0.8, 0.1, 0.1), 7)?;
    for (name, part) in [
        ("train", &split.train),
        ("validate", &split.validate),
        ("test", &split.test),
    ] {
        let pos = part.iter().filter(|s| s.label == 1).count();
        println!("{name}: {} samples, {pos} vulnerable", part.len());
        save_dataset(out.join(format!("{name}.jsonl")), part)?;
    }

    // Class-imbalance handling: downsample to a 2:1 healthy:vulnerable mix.
    let rebalanced = rebalance(&samples, 2.0, 7)?;
    let pos = rebalanced.iter().filter(|s| s.label == 1).count();
    println!(
        "rebalanced to 2:1 -> {} samples ({} vulnerable, {} healthy)",
        rebalanced.len(),
        pos,
        rebalanced.len() - pos
    );

    // The JSONL files round-trip.
    let back = load_dataset(out.join("train.jsonl"))?;
    assert_eq!(back.len(), split.train.len());
    println!("\nwrote {}", out.display());
    Ok(())
}
