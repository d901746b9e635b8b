//! AST node types and the tree structure produced by the parser.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Closed set of node types used across the pipeline. The first 21 are
/// produced by the parser; `CFGEntryNode`, `CFGExitNode` and `Symbol` are
/// synthesized later during graph construction and never appear in ASTs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    FunctionDef,
    CompoundStatement,
    Parameter,
    ParameterList,
    IdentifierDeclStmt,
    IdentifierDecl,
    IdentifierDeclType,
    Identifier,
    PrimaryExpr,
    ExpressionStmt,
    AssignmentExpression,
    RelationalExpression,
    AdditiveExpression,
    ArrayIndexing,
    CallExpression,
    Argument,
    IfStatement,
    ElseStatement,
    WhileStatement,
    Condition,
    ReturnStatement,
    CFGEntryNode,
    CFGExitNode,
    Symbol,
}

impl NodeType {
    pub const ALL: [NodeType; 24] = [
        NodeType::FunctionDef,
        NodeType::CompoundStatement,
        NodeType::Parameter,
        NodeType::ParameterList,
        NodeType::IdentifierDeclStmt,
        NodeType::IdentifierDecl,
        NodeType::IdentifierDeclType,
        NodeType::Identifier,
        NodeType::PrimaryExpr,
        NodeType::ExpressionStmt,
        NodeType::AssignmentExpression,
        NodeType::RelationalExpression,
        NodeType::AdditiveExpression,
        NodeType::ArrayIndexing,
        NodeType::CallExpression,
        NodeType::Argument,
        NodeType::IfStatement,
        NodeType::ElseStatement,
        NodeType::WhileStatement,
        NodeType::Condition,
        NodeType::ReturnStatement,
        NodeType::CFGEntryNode,
        NodeType::CFGExitNode,
        NodeType::Symbol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeType::FunctionDef => "FunctionDef",
            NodeType::CompoundStatement => "CompoundStatement",
            NodeType::Parameter => "Parameter",
            NodeType::ParameterList => "ParameterList",
            NodeType::IdentifierDeclStmt => "IdentifierDeclStmt",
            NodeType::IdentifierDecl => "IdentifierDecl",
            NodeType::IdentifierDeclType => "IdentifierDeclType",
            NodeType::Identifier => "Identifier",
            NodeType::PrimaryExpr => "PrimaryExpr",
            NodeType::ExpressionStmt => "ExpressionStmt",
            NodeType::AssignmentExpression => "AssignmentExpression",
            NodeType::RelationalExpression => "RelationalExpression",
            NodeType::AdditiveExpression => "AdditiveExpression",
            NodeType::ArrayIndexing => "ArrayIndexing",
            NodeType::CallExpression => "CallExpression",
            NodeType::Argument => "Argument",
            NodeType::IfStatement => "IfStatement",
            NodeType::ElseStatement => "ElseStatement",
            NodeType::WhileStatement => "WhileStatement",
            NodeType::Condition => "Condition",
            NodeType::ReturnStatement => "ReturnStatement",
            NodeType::CFGEntryNode => "CFGEntryNode",
            NodeType::CFGExitNode => "CFGExitNode",
            NodeType::Symbol => "Symbol",
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeType::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown node type {s:?}"))
    }
}

/// A node of the parse tree. Ids are assigned in preorder, 0-based and
/// dense, with the `FunctionDef` root holding id 0. `code` is the source
/// text the node covers (inter-token whitespace collapsed to one space);
/// statement headers carry only their header text, e.g. an `IfStatement`
/// carries `if (a < 55)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: u32,
    pub node_type: NodeType,
    pub code: String,
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub(crate) fn new(node_type: NodeType, code: impl Into<String>) -> Self {
        AstNode { id: 0, node_type, code: code.into(), children: Vec::new() }
    }

    pub(crate) fn with_children(
        node_type: NodeType,
        code: impl Into<String>,
        children: Vec<AstNode>,
    ) -> Self {
        AstNode { id: 0, node_type, code: code.into(), children }
    }

    /// Re-number the whole tree in preorder starting from 0.
    pub(crate) fn assign_preorder_ids(&mut self) {
        fn go(node: &mut AstNode, next: &mut u32) {
            node.id = *next;
            *next += 1;
            for child in &mut node.children {
                go(child, next);
            }
        }
        let mut next = 0;
        go(self, &mut next);
    }

    /// Visit every node in preorder.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a AstNode)) {
        f(self);
        for child in &self.children {
            child.walk(f);
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    /// All nodes of a given type, in preorder.
    pub fn find_all(&self, node_type: NodeType) -> Vec<&AstNode> {
        let mut out = Vec::new();
        self.walk(&mut |n| {
            if n.node_type == node_type {
                out.push(n);
            }
        });
        out
    }

    fn dump_into(&self, depth: usize, out: &mut String) {
        use fmt::Write;
        let _ = writeln!(out, "{:indent$}{} {:?}", "", self.node_type, self.code, indent = depth * 2);
        for child in &self.children {
            child.dump_into(depth + 1, out);
        }
    }
}

/// Indented text rendering, one node per line: handy in test failures.
impl fmt::Display for AstNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.dump_into(0, &mut out);
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_type_names_round_trip() {
        for t in NodeType::ALL {
            assert_eq!(t.name().parse::<NodeType>().unwrap(), t);
        }
        assert!("NotANode".parse::<NodeType>().is_err());
    }

    #[test]
    fn node_type_serializes_as_bare_name() {
        assert_eq!(serde_json::to_string(&NodeType::ArrayIndexing).unwrap(), "\"ArrayIndexing\"");
        let t: NodeType = serde_json::from_str("\"CFGEntryNode\"").unwrap();
        assert_eq!(t, NodeType::CFGEntryNode);
    }

    #[test]
    fn preorder_ids_are_dense() {
        let mut tree = AstNode::with_children(
            NodeType::FunctionDef,
            "f ()",
            vec![AstNode::with_children(
                NodeType::CompoundStatement,
                "",
                vec![AstNode::new(NodeType::ReturnStatement, "return")],
            )],
        );
        tree.assign_preorder_ids();
        let mut ids = Vec::new();
        tree.walk(&mut |n| ids.push(n.id));
        assert_eq!(ids, vec![0, 1, 2]);
    }
}
