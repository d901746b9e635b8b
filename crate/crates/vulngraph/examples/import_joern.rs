//! Round-trip a code property graph through the two-table TSV format
//! used by external CPG extractors: export a graph built by the bundled
//! frontend, re-import it from the tables, and verify nothing changed.
//!
//!     cargo run --example import_joern

use std::error::Error;
use std::path::Path;
use vulngraph::corpus::FunctionSample;
use vulngraph::cpg::{build_cpg, export_tsv, import_joern, import_joern_tables};

fn main() -> Result<(), Box<dyn Error>> {
    let sample = FunctionSample {
        id: "demo".into(),
        code: "void f(int n) { int i = 0; while (i < n) { i = i + 1; } }".into(),
        label: 0,
        cwe: None,
        origin: "example".into(),
    };
    let cpg = build_cpg(&sample)?;

    // Export to the nodes/edges tables an external extractor would emit.
    let (nodes_tsv, edges_tsv) = export_tsv(&cpg);
    println!("--- nodes.tsv (first lines) ---");
    for line in nodes_tsv.lines().take(5) {
        println!("{line}");
    }
    println!("--- edges.tsv (first lines) ---");
    for line in edges_tsv.lines().take(5) {
        println!("{line}");
    }

    // In-memory import.
    let imported = import_joern_tables(&nodes_tsv, &edges_tsv, "demo")?;
    assert_eq!(imported.nodes.len(), cpg.nodes.len());
    assert_eq!(imported.edges.len(), cpg.edges.len());
    imported.validate()?;
    println!(
        "\nround-trip ok: {} nodes, {} edges preserved",
        imported.nodes.len(),
        imported.edges.len()
    );

    // File-based import, as the `vulngraph cpg --import-joern` command does.
    let out = Path::new("target/example-output/import_joern");
    std::fs::create_dir_all(out)?;
    let nodes_path = out.join("demo-nodes.tsv");
    let edges_path = out.join("demo-edges.tsv");
    std::fs::write(&nodes_path, &nodes_tsv)?;
    std::fs::write(&edges_path, &edges_tsv)?;
    let from_files = import_joern(&nodes_path, &edges_path)?;
    println!("imported from {} as sample {:?}", out.display(), from_files.sample_id);

    // Malformed input is rejected with the offending file and line.
    let broken = edges_tsv.replacen("FLOWS_TO", "TELEPORTS_TO", 1);
    match import_joern_tables(&nodes_tsv, &broken, "demo") {
        Err(e) => println!("malformed table rejected: {e}"),
        Ok(_) => unreachable!("unknown edge type must not import"),
    }
    Ok(())
}
