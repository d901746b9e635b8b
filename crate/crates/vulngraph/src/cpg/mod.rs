//! Code Property Graphs: the union of a function's AST, control-flow
//! graph and program-dependence relations in one typed graph.
//!
//! Node ids are the AST's preorder ids followed by ENTRY, EXIT, and one
//! `Symbol` node per variable. Twelve edge types cover syntax
//! (`IS_AST_PARENT`, `IS_FUNCTION_OF_AST`, ...), control flow
//! (`FLOWS_TO`, `DOM`, `POST_DOM`, `CONTROLS`) and data flow (`DEF`,
//! `USE`, `DECLARES`, `REACHES` with a variable tag).

mod cfg;
pub mod flow;
mod io;

pub use io::{export_dot, export_tsv, import_joern, import_joern_tables};

use crate::corpus::FunctionSample;
use crate::frontend::{lex, parse_source, AstNode, FrontendError, NodeType};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// The twelve edge types. Serialized (JSON, TSV, DOT) under the exact
/// uppercase names.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeType {
    IsClassOf,
    IsFunctionOfAst,
    IsFunctionOfCfg,
    IsAstParent,
    Use,
    Def,
    Dom,
    PostDom,
    Controls,
    Declares,
    FlowsTo,
    Reaches,
}

impl EdgeType {
    pub const ALL: [EdgeType; 12] = [
        EdgeType::IsClassOf,
        EdgeType::IsFunctionOfAst,
        EdgeType::IsFunctionOfCfg,
        EdgeType::IsAstParent,
        EdgeType::Use,
        EdgeType::Def,
        EdgeType::Dom,
        EdgeType::PostDom,
        EdgeType::Controls,
        EdgeType::Declares,
        EdgeType::FlowsTo,
        EdgeType::Reaches,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::IsClassOf => "IS_CLASS_OF",
            EdgeType::IsFunctionOfAst => "IS_FUNCTION_OF_AST",
            EdgeType::IsFunctionOfCfg => "IS_FUNCTION_OF_CFG",
            EdgeType::IsAstParent => "IS_AST_PARENT",
            EdgeType::Use => "USE",
            EdgeType::Def => "DEF",
            EdgeType::Dom => "DOM",
            EdgeType::PostDom => "POST_DOM",
            EdgeType::Controls => "CONTROLS",
            EdgeType::Declares => "DECLARES",
            EdgeType::FlowsTo => "FLOWS_TO",
            EdgeType::Reaches => "REACHES",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeType::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown edge type {s:?}"))
    }
}

/// Node label: one of the closed [`NodeType`] set, or an opaque string
/// preserved verbatim from an external import.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CpgNodeKind {
    Typed(NodeType),
    Opaque(String),
}

impl CpgNodeKind {
    pub fn name(&self) -> &str {
        match self {
            CpgNodeKind::Typed(t) => t.name(),
            CpgNodeKind::Opaque(s) => s,
        }
    }

    pub fn typed(&self) -> Option<NodeType> {
        match self {
            CpgNodeKind::Typed(t) => Some(*t),
            CpgNodeKind::Opaque(_) => None,
        }
    }
}

impl From<NodeType> for CpgNodeKind {
    fn from(t: NodeType) -> Self {
        CpgNodeKind::Typed(t)
    }
}

impl From<&str> for CpgNodeKind {
    fn from(s: &str) -> Self {
        match s.parse::<NodeType>() {
            Ok(t) => CpgNodeKind::Typed(t),
            Err(_) => CpgNodeKind::Opaque(s.to_string()),
        }
    }
}

impl fmt::Display for CpgNodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for CpgNodeKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for CpgNodeKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(CpgNodeKind::from(s.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpgNode {
    pub id: u32,
    #[serde(rename = "type")]
    pub node_type: CpgNodeKind,
    pub code: String,
    #[serde(rename = "leaf")]
    pub is_leaf: bool,
}

impl CpgNode {
    pub fn is(&self, t: NodeType) -> bool {
        self.node_type.typed() == Some(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpgEdge {
    pub src: u32,
    pub dst: u32,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
    /// Variable tag; present exactly on REACHES edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
}

/// A complete code property graph for one function sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cpg {
    pub sample_id: String,
    pub label: Option<u8>,
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
}

#[derive(Debug, thiserror::Error)]
pub enum CpgError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("malformed CFG: node {id} ({code:?}) is {problem}")]
    MalformedCfg { id: u32, code: String, problem: &'static str },
    #[error("use of undeclared variable {name:?}")]
    UndeclaredVariable { name: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("import error at {file}:{line}: {message}")]
    Import { file: String, line: usize, message: String },
}

impl Cpg {
    pub fn node(&self, id: u32) -> &CpgNode {
        &self.nodes[id as usize]
    }

    /// Function name recovered from the FunctionDef header (`foo ()` → `foo`).
    pub fn function_name(&self) -> Option<&str> {
        let def = self.nodes.iter().find(|n| n.is(NodeType::FunctionDef))?;
        Some(def.code.split(" (").next().unwrap_or(&def.code).trim())
    }

    pub fn edges_of(&self, edge_type: EdgeType) -> impl Iterator<Item = &CpgEdge> {
        self.edges.iter().filter(move |e| e.edge_type == edge_type)
    }

    /// Ids of the CFG vertices: ENTRY, EXIT, statements and conditions —
    /// i.e. every endpoint of a FLOWS_TO edge.
    pub fn cfg_vertices(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .edges_of(EdgeType::FlowsTo)
            .flat_map(|e| [e.src, e.dst])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Check every structural invariant; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i as u32 {
                return Err(format!("node ids not dense at index {i} (id {})", node.id));
            }
        }
        let n = self.nodes.len() as u32;
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(format!("edge {}→{} ({}) out of range", e.src, e.dst, e.edge_type));
            }
            match (e.edge_type, &e.var) {
                (EdgeType::Reaches, None) => {
                    return Err(format!("REACHES edge {}→{} lacks a var tag", e.src, e.dst))
                }
                (t, Some(v)) if t != EdgeType::Reaches => {
                    return Err(format!("{t} edge {}→{} carries var {v:?}", e.src, e.dst))
                }
                _ => {}
            }
        }
        if let Some(label) = self.label {
            if label > 1 {
                return Err(format!("label {label} outside {{0,1}}"));
            }
        }

        let count = |t: NodeType| self.nodes.iter().filter(|n| n.is(t)).count();
        if count(NodeType::CFGEntryNode) != 1 || count(NodeType::CFGExitNode) != 1 {
            return Err("expected exactly one CFGEntryNode and one CFGExitNode".to_string());
        }

        // IS_AST_PARENT forms a tree: every target has exactly one parent,
        // no cycles (parent id relationships must be checkable from any
        // numbering, so use reachability instead of id order).
        let mut parent: BTreeMap<u32, u32> = BTreeMap::new();
        for e in self.edges_of(EdgeType::IsAstParent) {
            if parent.insert(e.dst, e.src).is_some() {
                return Err(format!("AST node {} has two parents", e.dst));
            }
        }
        for (&child, _) in &parent {
            let mut cur = child;
            let mut steps = 0;
            while let Some(&p) = parent.get(&cur) {
                cur = p;
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(format!("IS_AST_PARENT cycle through node {child}"));
                }
            }
        }

        // is_leaf consistency with IS_AST_PARENT out-edges.
        for node in &self.nodes {
            let has_children =
                self.edges_of(EdgeType::IsAstParent).any(|e| e.src == node.id);
            if node.is_leaf == has_children {
                return Err(format!(
                    "node {} is_leaf={} but has_children={}",
                    node.id, node.is_leaf, has_children
                ));
            }
        }

        // Every CFG vertex lies on an ENTRY→EXIT path, and the DOM /
        // POST_DOM edge sets are trees over the CFG vertex set.
        let verts = self.cfg_vertices();
        if !verts.is_empty() {
            let index: BTreeMap<u32, usize> =
                verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let entry = self.nodes.iter().find(|nd| nd.is(NodeType::CFGEntryNode)).unwrap().id;
            let exit = self.nodes.iter().find(|nd| nd.is(NodeType::CFGExitNode)).unwrap().id;
            let (Some(&ei), Some(&xi)) = (index.get(&entry), index.get(&exit)) else {
                return Err("ENTRY/EXIT not part of the CFG".to_string());
            };
            let edges: Vec<(usize, usize)> = self
                .edges_of(EdgeType::FlowsTo)
                .map(|e| (index[&e.src], index[&e.dst]))
                .collect();
            let g = flow::FlowGraph::new(verts.len(), ei, xi, &edges);
            if let Some(i) = g.reachable_from_entry().iter().position(|r| !r) {
                return Err(format!("CFG vertex {} unreachable from ENTRY", verts[i]));
            }
            if let Some(i) = g.reaches_exit().iter().position(|r| !r) {
                return Err(format!("EXIT unreachable from CFG vertex {}", verts[i]));
            }
            for (t, root) in [(EdgeType::Dom, entry), (EdgeType::PostDom, exit)] {
                let tree: Vec<&CpgEdge> = self.edges_of(t).collect();
                if tree.len() != verts.len() - 1 {
                    return Err(format!(
                        "{t} has {} edges for {} CFG vertices",
                        tree.len(),
                        verts.len()
                    ));
                }
                // In a DOM tree children are edge dsts; POST_DOM points
                // child→parent, so the child is the src.
                let mut seen = BTreeMap::new();
                for e in tree {
                    let child = if t == EdgeType::Dom { e.dst } else { e.src };
                    if child == root || seen.insert(child, ()).is_some() {
                        return Err(format!("{t} edges do not form a tree at node {child}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parse a sample and build its full CPG.
pub fn build_cpg(sample: &FunctionSample) -> Result<Cpg, CpgError> {
    let ast = parse_source(&sample.code)?;
    build_cpg_from_ast(&ast, &sample.id, Some(sample.label))
}

pub(crate) fn build_cpg_from_ast(
    ast: &AstNode,
    sample_id: &str,
    label: Option<u8>,
) -> Result<Cpg, CpgError> {
    let ast_count = ast.node_count() as u32;
    let entry = ast_count;
    let exit = ast_count + 1;

    let mut nodes = Vec::with_capacity(ast_count as usize + 2);
    ast.walk(&mut |n| {
        nodes.push(CpgNode {
            id: n.id,
            node_type: n.node_type.into(),
            code: n.code.clone(),
            is_leaf: n.children.is_empty(),
        });
    });
    nodes.sort_by_key(|n| n.id);
    nodes.push(CpgNode {
        id: entry,
        node_type: NodeType::CFGEntryNode.into(),
        code: "ENTRY".to_string(),
        is_leaf: true,
    });
    nodes.push(CpgNode {
        id: exit,
        node_type: NodeType::CFGExitNode.into(),
        code: "EXIT".to_string(),
        is_leaf: true,
    });

    let mut edges: Vec<CpgEdge> = Vec::new();
    let push = |src: u32, dst: u32, t: EdgeType, var: Option<String>, edges: &mut Vec<CpgEdge>| {
        edges.push(CpgEdge { src, dst, edge_type: t, var });
    };

    // Syntax: parent/child edges plus the function wiring edges.
    let body = ast.children.last().expect("FunctionDef has a body");
    push(ast.id, body.id, EdgeType::IsFunctionOfAst, None, &mut edges);
    push(ast.id, entry, EdgeType::IsFunctionOfCfg, None, &mut edges);
    ast.walk(&mut |n| {
        for child in &n.children {
            edges.push(CpgEdge { src: n.id, dst: child.id, edge_type: EdgeType::IsAstParent, var: None });
        }
    });

    // Control flow.
    let cfg_edges = cfg::build_cfg_edges(ast, entry, exit);
    for &(a, b) in &cfg_edges {
        push(a, b, EdgeType::FlowsTo, None, &mut edges);
    }

    // Flow analyses run over a dense renumbering of the CFG vertex set.
    let mut verts = vec![entry, exit];
    verts.extend(cfg::flow_vertices(ast));
    verts.sort_unstable();
    let index_of = |id: u32| verts.binary_search(&id).expect("CFG vertex");
    let dense: Vec<(usize, usize)> =
        cfg_edges.iter().map(|&(a, b)| (index_of(a), index_of(b))).collect();
    let g = flow::FlowGraph::new(verts.len(), index_of(entry), index_of(exit), &dense);

    let describe = |i: usize| {
        let node = &nodes[verts[i] as usize];
        (verts[i], node.code.clone())
    };
    if let Some(i) = g.reachable_from_entry().iter().position(|r| !r) {
        let (id, code) = describe(i);
        return Err(CpgError::MalformedCfg { id, code, problem: "unreachable from ENTRY" });
    }
    if let Some(i) = g.reaches_exit().iter().position(|r| !r) {
        let (id, code) = describe(i);
        return Err(CpgError::MalformedCfg { id, code, problem: "unable to reach EXIT" });
    }

    for (v, idom) in flow::immediate_dominators(&g).into_iter().enumerate() {
        if let Some(d) = idom {
            push(verts[d], verts[v], EdgeType::Dom, None, &mut edges);
        }
    }
    for (v, ipdom) in flow::immediate_postdominators(&g).into_iter().enumerate() {
        if let Some(d) = ipdom {
            push(verts[v], verts[d], EdgeType::PostDom, None, &mut edges);
        }
    }
    for (c, n) in flow::control_dependences(&g) {
        push(verts[c], verts[n], EdgeType::Controls, None, &mut edges);
    }

    // Data flow: def/use sets per CFG vertex, Symbol nodes, reaching defs.
    let mut declared: Vec<String> = Vec::new();
    ast.walk(&mut |n| {
        if matches!(n.node_type, NodeType::IdentifierDecl | NodeType::Parameter) {
            declared.push(n.children[1].code.clone());
        }
    });

    let mut def_names: Vec<Vec<String>> = vec![Vec::new(); verts.len()];
    let mut use_names: Vec<Vec<String>> = vec![Vec::new(); verts.len()];
    let mut declares: Vec<(usize, String)> = Vec::new();
    let mut ordered_vars: Vec<String> = Vec::new();
    {
        let note = |name: &str, ordered: &mut Vec<String>| {
            if !ordered.iter().any(|v| v == name) {
                ordered.push(name.to_string());
            }
        };
        let mut visit = |n: &AstNode| -> Result<(), CpgError> {
            if !matches!(
                n.node_type,
                NodeType::IdentifierDeclStmt
                    | NodeType::ExpressionStmt
                    | NodeType::ReturnStatement
                    | NodeType::Condition
            ) {
                return Ok(());
            }
            let v = index_of(n.id);
            let (defs, uses) = statement_def_use(n);
            for name in defs.iter().chain(&uses) {
                if !declared.iter().any(|d| d == name) {
                    return Err(CpgError::UndeclaredVariable { name: name.clone() });
                }
            }
            if n.node_type == NodeType::IdentifierDeclStmt {
                declares.push((v, n.children[0].children[1].code.clone()));
            }
            for name in &defs {
                note(name, &mut ordered_vars);
            }
            for name in &uses {
                note(name, &mut ordered_vars);
            }
            def_names[v] = defs;
            use_names[v] = uses;
            Ok(())
        };
        let mut result = Ok(());
        ast.walk(&mut |n| {
            if result.is_ok() {
                result = visit(n);
            }
        });
        result?;
    }

    // Symbol nodes, in first-mention order after EXIT.
    let symbol_id: BTreeMap<&str, u32> = ordered_vars
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), exit + 1 + i as u32))
        .collect();
    for name in &ordered_vars {
        nodes.push(CpgNode {
            id: symbol_id[name.as_str()],
            node_type: NodeType::Symbol.into(),
            code: name.clone(),
            is_leaf: true,
        });
    }
    for (v, names) in def_names.iter().enumerate() {
        for name in dedup(names) {
            push(verts[v], symbol_id[name], EdgeType::Def, None, &mut edges);
        }
    }
    for (v, names) in use_names.iter().enumerate() {
        for name in dedup(names) {
            push(verts[v], symbol_id[name], EdgeType::Use, None, &mut edges);
        }
    }
    for (v, name) in &declares {
        push(verts[*v], symbol_id[name.as_str()], EdgeType::Declares, None, &mut edges);
    }

    let var_id = |name: &str| ordered_vars.iter().position(|v| v == name).unwrap() as u32;
    let defs_ids: Vec<Vec<u32>> =
        def_names.iter().map(|ns| dedup(ns).iter().map(|n| var_id(n)).collect()).collect();
    let uses_ids: Vec<Vec<u32>> =
        use_names.iter().map(|ns| dedup(ns).iter().map(|n| var_id(n)).collect()).collect();
    for (d, u, var) in flow::reaching_definitions(&g, &defs_ids, &uses_ids) {
        push(
            verts[d],
            verts[u],
            EdgeType::Reaches,
            Some(ordered_vars[var as usize].clone()),
            &mut edges,
        );
    }

    edges.sort_by(|a, b| {
        (a.edge_type, a.src, a.dst, &a.var).cmp(&(b.edge_type, b.src, b.dst, &b.var))
    });
    edges.dedup();

    Ok(Cpg { sample_id: sample_id.to_string(), label, nodes, edges })
}

fn dedup(names: &[String]) -> Vec<&str> {
    let mut out: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Defs and uses of one statement-level node: declared or assigned
/// identifiers define; identifiers read (initializers, conditions, array
/// indices, call arguments) use. A write through `arr[i]` defines `arr`
/// and uses `i`; `memset`/`memcpy`/`strcpy` define through their first
/// argument.
fn statement_def_use(node: &AstNode) -> (Vec<String>, Vec<String>) {
    let mut defs = Vec::new();
    let mut uses = Vec::new();
    match node.node_type {
        NodeType::IdentifierDeclStmt => {
            let decl = &node.children[0];
            defs.push(decl.children[1].code.clone());
            for extra in &decl.children[2..] {
                expr_def_use(extra, &mut defs, &mut uses);
            }
        }
        NodeType::ExpressionStmt | NodeType::ReturnStatement | NodeType::Condition => {
            for child in &node.children {
                expr_def_use(child, &mut defs, &mut uses);
            }
        }
        _ => {}
    }
    (defs, uses)
}

fn expr_def_use(node: &AstNode, defs: &mut Vec<String>, uses: &mut Vec<String>) {
    match node.node_type {
        NodeType::Identifier => uses.push(node.code.clone()),
        NodeType::PrimaryExpr => {}
        NodeType::AssignmentExpression => {
            let target = &node.children[0];
            match target.node_type {
                NodeType::Identifier => {
                    defs.push(target.code.clone());
                    // `x += e` also reads x.
                    if top_level_assign_op(&node.code).is_some_and(|op| op != "=") {
                        uses.push(target.code.clone());
                    }
                }
                NodeType::ArrayIndexing => {
                    defs.push(target.children[0].code.clone());
                    expr_def_use(&target.children[1], defs, uses);
                }
                _ => expr_def_use(target, defs, uses),
            }
            expr_def_use(&node.children[1], defs, uses);
        }
        NodeType::CallExpression => {
            let callee = node.children[0].code.as_str();
            for arg in &node.children[1..] {
                expr_def_use(arg, defs, uses);
            }
            if matches!(callee, "memset" | "memcpy" | "strcpy") {
                if let Some(arg) = node.children.get(1) {
                    let base = &arg.children[0];
                    let written = match base.node_type {
                        NodeType::Identifier => Some(base.code.clone()),
                        NodeType::ArrayIndexing => Some(base.children[0].code.clone()),
                        _ => None,
                    };
                    defs.extend(written);
                }
            }
        }
        _ => {
            for child in &node.children {
                expr_def_use(child, defs, uses);
            }
        }
    }
}

/// The top-level assignment operator of an expression's text (`=`, `+=`
/// or `-=`), ignoring anything nested inside brackets.
fn top_level_assign_op(code: &str) -> Option<String> {
    let tokens = lex(code).ok()?;
    let mut depth = 0usize;
    for tok in tokens {
        match tok.text.as_str() {
            "(" | "[" => depth += 1,
            ")" | "]" => depth = depth.saturating_sub(1),
            "=" | "+=" | "-=" if depth == 0 => return Some(tok.text),
            _ => {}
        }
    }
    None
}
