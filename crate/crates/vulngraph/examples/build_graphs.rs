//! Parse one C function and build its code property graph: the AST plus
//! control flow, dominance, control dependence, and def-use/reaching-
//! definition edges, all in a single typed edge set.
//!
//!     cargo run --example build_graphs
//!
//! Writes a Graphviz rendering to `target/example-output/build_graphs/`.

use std::collections::BTreeMap;
use std::error::Error;
use std::path::Path;
use vulngraph::corpus::FunctionSample;
use vulngraph::cpg::{build_cpg, export_dot, EdgeType};
use vulngraph::frontend::NodeType;

/// A bounds check that a later reassignment silently invalidates: the
/// write `arr[a]` is guarded by `a < 55`, but `a` becomes 63 in between.
const CODE: &str =
    "void foo() { int a = 43; char arr[55]; if (a < 55) { a = 63; } arr[a] = 'x'; }";

fn main() -> Result<(), Box<dyn Error>> {
    let sample = FunctionSample {
        id: "foo".into(),
        code: CODE.into(),
        label: 1,
        cwe: Some("CWE-787".into()),
        origin: "example".into(),
    };
    let cpg = build_cpg(&sample)?;
    println!("{}", CODE);
    println!("\n{} nodes, {} edges", cpg.nodes.len(), cpg.edges.len());

    // Node inventory.
    let mut node_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &cpg.nodes {
        *node_counts.entry(n.node_type.name()).or_default() += 1;
    }
    println!("\nnode types:");
    for (name, n) in &node_counts {
        println!("  {name:<22} {n}");
    }

    // Edge inventory over the full twelve-type vocabulary.
    println!("\nedge types:");
    for t in EdgeType::ALL {
        let n = cpg.edges.iter().filter(|e| e.edge_type == t).count();
        println!("  {:<22} {n}", t.name());
    }

    // Data flow: which definitions reach which uses, per variable.
    println!("\nreaching definitions (REACHES edges):");
    for e in cpg.edges.iter().filter(|e| e.edge_type == EdgeType::Reaches) {
        let code_of = |id: u32| cpg.nodes[id as usize].code.replace('\n', " ");
        println!(
            "  [{}] {:?} -> {:?}",
            e.var.as_deref().unwrap_or("?"),
            code_of(e.src),
            code_of(e.dst)
        );
    }

    // The vulnerable write depends on the condition that was meant to
    // protect it — visible as a CONTROLS edge from the if-condition.
    let cond = cpg
        .nodes
        .iter()
        .find(|n| n.is(NodeType::Condition))
        .expect("the function has one condition");
    let controlled = cpg
        .edges
        .iter()
        .filter(|e| e.edge_type == EdgeType::Controls && e.src == cond.id)
        .count();
    println!("\nthe condition {:?} controls {controlled} statements", cond.code);

    let out = Path::new("target/example-output/build_graphs");
    std::fs::create_dir_all(out)?;
    let dot_path = out.join("foo.dot");
    std::fs::write(&dot_path, export_dot(&cpg))?;
    println!("wrote {} (render with `dot -Tsvg`)", dot_path.display());
    Ok(())
}
