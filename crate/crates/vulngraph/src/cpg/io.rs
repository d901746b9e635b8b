//! CPG import/export: Joern-style TSV tables, DOT rendering.
//!
//! Nodes TSV: `id<TAB>type<TAB>code`; edges TSV:
//! `start<TAB>end<TAB>type<TAB>var` with `var` empty except on REACHES.
//! Imported ids may be sparse (as in published listings); they are
//! remapped to dense ids in order of appearance.

use super::{Cpg, CpgEdge, CpgError, CpgNode, CpgNodeKind, EdgeType};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

const NODES_HEADER: &str = "id\ttype\tcode";
const EDGES_HEADER: &str = "start\tend\ttype\tvar";

/// Render the graph as (nodes table, edges table), byte-compatible with
/// [`import_joern_tables`]. Tabs and newlines inside code become spaces.
pub fn export_tsv(cpg: &Cpg) -> (String, String) {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    let mut nodes = String::from(NODES_HEADER);
    nodes.push('\n');
    for n in &cpg.nodes {
        let _ = writeln!(nodes, "{}\t{}\t{}", n.id, n.node_type.name(), clean(&n.code));
    }
    let mut edges = String::from(EDGES_HEADER);
    edges.push('\n');
    for e in &cpg.edges {
        let var = e.var.as_deref().unwrap_or("");
        let _ = writeln!(edges, "{}\t{}\t{}\t{}", e.src, e.dst, e.edge_type.name(), var);
    }
    (nodes, edges)
}

/// Import a graph from TSV files; the sample id is the nodes file stem.
pub fn import_joern(
    nodes_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
) -> Result<Cpg, CpgError> {
    let nodes_path = nodes_path.as_ref();
    let edges_path = edges_path.as_ref();
    let read = |path: &Path| {
        std::fs::read_to_string(path).map_err(|source| CpgError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    let nodes = read(nodes_path)?;
    let edges = read(edges_path)?;
    let sample_id = nodes_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "imported".to_string());
    import_joern_tables(&nodes, &edges, &sample_id).map_err(|e| match e {
        CpgError::Import { file, line, message } => CpgError::Import {
            file: if file == "nodes" {
                nodes_path.display().to_string()
            } else {
                edges_path.display().to_string()
            },
            line,
            message,
        },
        other => other,
    })
}

/// Import a graph from in-memory TSV tables.
pub fn import_joern_tables(nodes: &str, edges: &str, sample_id: &str) -> Result<Cpg, CpgError> {
    let node_err = |line: usize, message: String| CpgError::Import {
        file: "nodes".to_string(),
        line,
        message,
    };
    let edge_err = |line: usize, message: String| CpgError::Import {
        file: "edges".to_string(),
        line,
        message,
    };

    let mut node_lines = nodes.lines().enumerate();
    match node_lines.next() {
        Some((_, header)) if header == NODES_HEADER => {}
        other => {
            return Err(node_err(
                1,
                format!("expected header {NODES_HEADER:?}, got {:?}", other.map(|(_, h)| h)),
            ))
        }
    }

    let mut out_nodes = Vec::new();
    let mut dense: HashMap<u64, u32> = HashMap::new();
    for (idx, line) in node_lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(id), Some(ty), Some(code)) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(node_err(lineno, format!("expected 3 tab-separated fields: {line:?}")));
        };
        let id: u64 = id
            .parse()
            .map_err(|_| node_err(lineno, format!("invalid node id {id:?}")))?;
        let new_id = out_nodes.len() as u32;
        if dense.insert(id, new_id).is_some() {
            return Err(node_err(lineno, format!("duplicate node id {id}")));
        }
        out_nodes.push(CpgNode {
            id: new_id,
            node_type: CpgNodeKind::from(ty),
            code: code.to_string(),
            is_leaf: true, // fixed up from IS_AST_PARENT edges below
        });
    }

    let mut edge_lines = edges.lines().enumerate();
    match edge_lines.next() {
        Some((_, header)) if header == EDGES_HEADER => {}
        other => {
            return Err(edge_err(
                1,
                format!("expected header {EDGES_HEADER:?}, got {:?}", other.map(|(_, h)| h)),
            ))
        }
    }

    let mut out_edges = Vec::new();
    for (idx, line) in edge_lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [start, end, ty, var] = fields[..] else {
            return Err(edge_err(lineno, format!("expected 4 tab-separated fields: {line:?}")));
        };
        let endpoint = |text: &str| -> Result<u32, CpgError> {
            let id: u64 = text
                .parse()
                .map_err(|_| edge_err(lineno, format!("invalid endpoint {text:?}")))?;
            dense
                .get(&id)
                .copied()
                .ok_or_else(|| edge_err(lineno, format!("dangling endpoint {id} in edge {line:?}")))
        };
        let src = endpoint(start)?;
        let dst = endpoint(end)?;
        let edge_type: EdgeType =
            ty.parse().map_err(|e: String| edge_err(lineno, e))?;
        let var = (!var.is_empty()).then(|| var.to_string());
        match (edge_type, &var) {
            (EdgeType::Reaches, None) => {
                return Err(edge_err(lineno, "REACHES edge lacks a var tag".to_string()))
            }
            (t, Some(_)) if t != EdgeType::Reaches => {
                return Err(edge_err(lineno, format!("{t} edge carries a var tag")))
            }
            _ => {}
        }
        out_edges.push(CpgEdge { src, dst, edge_type, var });
    }

    for e in &out_edges {
        if e.edge_type == EdgeType::IsAstParent {
            out_nodes[e.src as usize].is_leaf = false;
        }
    }

    Ok(Cpg {
        sample_id: sample_id.to_string(),
        label: None,
        nodes: out_nodes,
        edges: out_edges,
    })
}

/// DOT rendering with the usual edge-family legend: syntax edges solid
/// black, control-flow dashed green, dependence dotted blue. REACHES
/// edges carry their variable tag in the label.
pub fn export_dot(cpg: &Cpg) -> String {
    let escape = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
    let mut out = String::from("digraph cpg {\n");
    let _ = writeln!(out, "  // sample: {}", escape(&cpg.sample_id));
    out.push_str("  node [shape=box, fontname=\"monospace\"];\n");
    for n in &cpg.nodes {
        let label = if n.code.is_empty() {
            format!("{}: {}", n.id, n.node_type.name())
        } else {
            format!("{}: {}\\n{}", n.id, n.node_type.name(), escape(&n.code))
        };
        let _ = writeln!(out, "  n{} [label=\"{}\"];", n.id, label);
    }
    for e in &cpg.edges {
        let (style, color) = match e.edge_type {
            EdgeType::IsAstParent | EdgeType::IsFunctionOfAst | EdgeType::IsClassOf => {
                ("solid", "black")
            }
            EdgeType::FlowsTo | EdgeType::IsFunctionOfCfg => ("dashed", "darkgreen"),
            _ => ("dotted", "blue"),
        };
        let label = match &e.var {
            Some(var) => format!("{} {}", e.edge_type.name(), escape(var)),
            None => e.edge_type.name().to_string(),
        };
        let _ = writeln!(
            out,
            "  n{} -> n{} [label=\"{}\", style={}, color={}];",
            e.src, e.dst, label, style, color
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::build_cpg;
    use super::*;
    use crate::corpus::{generate_synthetic, FunctionSample};
    use crate::frontend::NodeType;

    fn sample(code: &str) -> FunctionSample {
        FunctionSample {
            id: "t".into(),
            code: code.into(),
            label: 0,
            cwe: None,
            origin: "synthetic".into(),
        }
    }

    /// The published node/edge listing for the running example, ids as
    /// printed (sparse).
    const FIG_NODES: &str = "id\ttype\tcode\n\
        3\tFunctionDef\tfoo ()\n\
        5\tIdentifierDeclStmt\tint a = 43\n\
        6\tIdentifierDecl\ta = 43\n\
        7\tIdentifierDeclType\tint\n\
        8\tIdentifier\ta\n\
        17\tIfStatement\tif (a < 55)\n\
        18\tCondition\ta < 55\n\
        20\tIdentifier\ta\n\
        21\tPrimaryExpr\t55\n\
        23\tExpressionStmt\ta = 63\n\
        36\tCFGEntryNode\tENTRY\n\
        37\tCFGExitNode\tEXIT\n\
        39\tSymbol\ta\n";

    const FIG_EDGES: &str = "start\tend\ttype\tvar\n\
        6\t7\tIS_AST_PARENT\t\n\
        5\t6\tIS_AST_PARENT\t\n\
        36\t5\tFLOWS_TO\t\n\
        5\t18\tREACHES\ta\n\
        18\t23\tCONTROLS\t\n\
        5\t39\tDEF\t\n\
        18\t39\tUSE\t\n\
        18\t23\tDOM\t\n\
        5\t36\tPOST_DOM\t\n";

    #[test]
    fn imports_published_listing() {
        let cpg = import_joern_tables(FIG_NODES, FIG_EDGES, "fig").unwrap();
        assert_eq!(cpg.nodes.len(), 13);
        assert_eq!(cpg.edges.len(), 9);
        // Dense remapping follows input order: printed id 3 → 0, 5 → 1, …
        assert_eq!(cpg.nodes[0].node_type.name(), "FunctionDef");
        assert_eq!(cpg.nodes[0].code, "foo ()");
        assert_eq!(cpg.nodes[12].node_type.name(), "Symbol");
        assert_eq!(cpg.nodes[12].code, "a");
        // 5 → 18 REACHES a becomes 1 → 6.
        let reaches = cpg.edges.iter().find(|e| e.edge_type == EdgeType::Reaches).unwrap();
        assert_eq!((reaches.src, reaches.dst), (1, 6));
        assert_eq!(reaches.var.as_deref(), Some("a"));
        // Interior nodes got their leaf flag from IS_AST_PARENT edges.
        assert!(!cpg.nodes[1].is_leaf, "IdentifierDeclStmt has an AST child");
        assert!(cpg.nodes[3].is_leaf, "IdentifierDeclType is a leaf");
    }

    #[test]
    fn import_then_export_is_a_fixpoint() {
        let first = import_joern_tables(FIG_NODES, FIG_EDGES, "fig").unwrap();
        let (nodes, edges) = export_tsv(&first);
        let second = import_joern_tables(&nodes, &edges, "fig").unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn export_import_round_trips_synthetic_graphs() {
        for s in generate_synthetic(100, 0.5, 21) {
            let g = build_cpg(&s).unwrap();
            let (nodes, edges) = export_tsv(&g);
            let mut back = import_joern_tables(&nodes, &edges, &s.id).unwrap();
            back.label = g.label; // TSV carries structure only
            assert_eq!(back, g, "round trip failed for {}", s.id);
        }
    }

    #[test]
    fn single_node_graph_imports() {
        let cpg =
            import_joern_tables("id\ttype\tcode\n1\tFunctionDef\tf ()\n", "start\tend\ttype\tvar\n", "x")
                .unwrap();
        assert_eq!(cpg.nodes.len(), 1);
        assert!(cpg.edges.is_empty());
    }

    #[test]
    fn dangling_endpoint_is_an_error_naming_the_row() {
        let err = import_joern_tables(
            "id\ttype\tcode\n1\tFunctionDef\tf ()\n",
            "start\tend\ttype\tvar\n1\t99\tIS_AST_PARENT\t\n",
            "x",
        )
        .unwrap_err();
        match err {
            CpgError::Import { file, line, message } => {
                assert_eq!(file, "edges");
                assert_eq!(line, 2);
                assert!(message.contains("dangling endpoint 99"), "{message}");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn unknown_edge_type_is_an_error() {
        let err = import_joern_tables(
            "id\ttype\tcode\n1\tFunctionDef\tf ()\n2\tCompoundStatement\t\n",
            "start\tend\ttype\tvar\n1\t2\tPOINTS_TO\t\n",
            "x",
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown edge type"), "{err}");
    }

    #[test]
    fn unknown_node_type_is_preserved_opaquely() {
        let cpg = import_joern_tables(
            "id\ttype\tcode\n1\tCastExpression\t(int) x\n",
            "start\tend\ttype\tvar\n",
            "x",
        )
        .unwrap();
        assert_eq!(cpg.nodes[0].node_type, CpgNodeKind::Opaque("CastExpression".into()));
        assert_eq!(cpg.nodes[0].node_type.name(), "CastExpression");
    }

    #[test]
    fn var_tag_rules_enforced_on_import() {
        let reaches_missing = import_joern_tables(
            "id\ttype\tcode\n1\tCondition\ta\n2\tSymbol\ta\n",
            "start\tend\ttype\tvar\n1\t2\tREACHES\t\n",
            "x",
        );
        assert!(reaches_missing.is_err());
        let tagged_use = import_joern_tables(
            "id\ttype\tcode\n1\tCondition\ta\n2\tSymbol\ta\n",
            "start\tend\ttype\tvar\n1\t2\tUSE\ta\n",
            "x",
        );
        assert!(tagged_use.is_err());
    }

    #[test]
    fn tsv_replaces_embedded_tabs_with_spaces() {
        let mut g = build_cpg(&sample("void f() {}")).unwrap();
        g.nodes[0].code = "f\t()".into();
        let (nodes, _) = export_tsv(&g);
        let row = nodes.lines().nth(1).unwrap();
        assert_eq!(row.split('\t').count(), 3);
        assert!(row.contains("f ()"));
    }

    #[test]
    fn dot_labels_reaches_with_var_and_has_all_nodes() {
        let g = build_cpg(&sample(
            "void foo() { int a = 43; char arr[55]; if (a < 55) { a = 63; } arr[a] = 'x'; }",
        ))
        .unwrap();
        let dot = export_dot(&g);
        assert!(dot.contains("label=\"REACHES a\""), "missing tagged data edge");
        for n in &g.nodes {
            assert!(dot.contains(&format!("n{} [", n.id)));
        }
        assert!(dot.contains("style=solid"));
        assert!(dot.contains("style=dashed"));
        assert!(dot.contains("style=dotted"));
    }

    #[test]
    fn empty_body_dot_has_four_node_declarations() {
        let g = build_cpg(&sample("void f() {}")).unwrap();
        let dot = export_dot(&g);
        let decls = dot.lines().filter(|l| l.trim_start().starts_with('n') && l.contains("label=") && !l.contains("->")).count();
        assert_eq!(decls, 4);
        let _ = g.nodes.iter().map(|n| n.node_type.typed().unwrap()).collect::<Vec<NodeType>>();
    }

    #[test]
    fn import_from_files_uses_stem_as_sample_id() {
        let dir = tempfile::tempdir().unwrap();
        let nodes_path = dir.path().join("fig4.nodes.tsv");
        let edges_path = dir.path().join("fig4.edges.tsv");
        std::fs::write(&nodes_path, FIG_NODES).unwrap();
        std::fs::write(&edges_path, FIG_EDGES).unwrap();
        let cpg = import_joern(&nodes_path, &edges_path).unwrap();
        assert_eq!(cpg.sample_id, "fig4.nodes");
        assert_eq!(cpg.label, None);
    }
}
