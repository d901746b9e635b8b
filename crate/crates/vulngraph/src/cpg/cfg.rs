//! Statement-level control-flow construction over parsed ASTs.
//!
//! CFG vertices are the synthetic ENTRY/EXIT nodes, every statement node
//! (`IdentifierDeclStmt`, `ExpressionStmt`, `ReturnStatement`) and every
//! `Condition` node; compound statements are transparent. `if` branches
//! from the condition to then-first and else-first (or the join), `while`
//! loops back from the body's last statement to the condition, `return`
//! jumps straight to EXIT.

use crate::frontend::{AstNode, NodeType};

/// AST node ids that become CFG vertices, in preorder.
pub(crate) fn flow_vertices(root: &AstNode) -> Vec<u32> {
    let mut out = Vec::new();
    root.walk(&mut |n| {
        if matches!(
            n.node_type,
            NodeType::IdentifierDeclStmt
                | NodeType::ExpressionStmt
                | NodeType::ReturnStatement
                | NodeType::Condition
        ) {
            out.push(n.id);
        }
    });
    out
}

/// FLOWS_TO edges over AST node ids plus the caller-assigned `entry` and
/// `exit` ids. Sorted and deduplicated.
pub(crate) fn build_cfg_edges(root: &AstNode, entry: u32, exit: u32) -> Vec<(u32, u32)> {
    let body = root.children.last().expect("FunctionDef always has a body");
    let mut edges = Vec::new();
    let first = wire(body, exit, exit, &mut edges);
    edges.push((entry, first));
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Wire `stmt` into the CFG given the vertex control reaches after it,
/// returning the statement's own entry vertex.
fn wire(stmt: &AstNode, follow: u32, exit: u32, edges: &mut Vec<(u32, u32)>) -> u32 {
    match stmt.node_type {
        NodeType::IdentifierDeclStmt | NodeType::ExpressionStmt => {
            edges.push((stmt.id, follow));
            stmt.id
        }
        NodeType::ReturnStatement => {
            edges.push((stmt.id, exit));
            stmt.id
        }
        NodeType::CompoundStatement => {
            let mut cur = follow;
            for child in stmt.children.iter().rev() {
                cur = wire(child, cur, exit, edges);
            }
            cur
        }
        NodeType::IfStatement => {
            let cond = &stmt.children[0];
            let then_entry = wire(&stmt.children[1], follow, exit, edges);
            let else_entry = match stmt.children.get(2) {
                Some(else_node) => wire(&else_node.children[0], follow, exit, edges),
                None => follow,
            };
            edges.push((cond.id, then_entry));
            edges.push((cond.id, else_entry));
            cond.id
        }
        NodeType::WhileStatement => {
            let cond = &stmt.children[0];
            let body_entry = wire(&stmt.children[1], cond.id, exit, edges);
            edges.push((cond.id, body_entry));
            edges.push((cond.id, follow));
            cond.id
        }
        other => unreachable!("{other} is not a statement"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn cfg_of(src: &str) -> (Vec<u32>, Vec<(u32, u32)>, u32, u32) {
        let root = parse_source(src).unwrap();
        let n = root.node_count() as u32;
        let (entry, exit) = (n, n + 1);
        (flow_vertices(&root), build_cfg_edges(&root, entry, exit), entry, exit)
    }

    fn id_of(src: &str, ty: NodeType, nth: usize) -> u32 {
        parse_source(src).unwrap().find_all(ty)[nth].id
    }

    #[test]
    fn empty_body_is_entry_to_exit() {
        let (verts, edges, entry, exit) = cfg_of("void f() {}");
        assert!(verts.is_empty());
        assert_eq!(edges, vec![(entry, exit)]);
    }

    #[test]
    fn straight_line_chain_has_k_plus_one_edges() {
        let src = "void f() { int a = 1; int b = 2; a = b; }";
        let (verts, edges, entry, exit) = cfg_of(src);
        assert_eq!(verts.len(), 3);
        assert_eq!(edges.len(), 4);
        assert!(edges.contains(&(entry, verts[0])));
        assert!(edges.contains(&(verts[0], verts[1])));
        assert!(edges.contains(&(verts[1], verts[2])));
        assert!(edges.contains(&(verts[2], exit)));
    }

    #[test]
    fn if_branches_from_condition() {
        let src = "void f() { int a = 1; if (a < 2) { a = 3; } a = 4; }";
        let (_, edges, _, _) = cfg_of(src);
        let cond = id_of(src, NodeType::Condition, 0);
        let then_stmt = id_of(src, NodeType::ExpressionStmt, 0);
        let join = id_of(src, NodeType::ExpressionStmt, 1);
        assert!(edges.contains(&(cond, then_stmt)), "true edge");
        assert!(edges.contains(&(cond, join)), "false edge to join");
        assert!(edges.contains(&(then_stmt, join)), "then falls through to join");
    }

    #[test]
    fn if_else_branches_to_both_arms() {
        let src = "void f() { int a = 1; if (a < 2) { a = 3; } else { a = 4; } }";
        let (_, edges, _, exit) = cfg_of(src);
        let cond = id_of(src, NodeType::Condition, 0);
        let then_stmt = id_of(src, NodeType::ExpressionStmt, 0);
        let else_stmt = id_of(src, NodeType::ExpressionStmt, 1);
        assert!(edges.contains(&(cond, then_stmt)));
        assert!(edges.contains(&(cond, else_stmt)));
        assert!(edges.contains(&(then_stmt, exit)));
        assert!(edges.contains(&(else_stmt, exit)));
    }

    #[test]
    fn while_has_back_edge_from_body_last() {
        let src = "void f() { int i = 0; while (i < 9) { i = i + 1; } return; }";
        let (_, edges, _, exit) = cfg_of(src);
        let cond = id_of(src, NodeType::Condition, 0);
        let body = id_of(src, NodeType::ExpressionStmt, 0);
        let ret = id_of(src, NodeType::ReturnStatement, 0);
        assert!(edges.contains(&(cond, body)), "loop entry");
        assert!(edges.contains(&(body, cond)), "back edge");
        assert!(edges.contains(&(cond, ret)), "loop exit");
        assert!(edges.contains(&(ret, exit)));
    }

    #[test]
    fn return_jumps_to_exit_not_follow() {
        let src = "void f() { int a = 1; if (a < 2) { return; } a = 3; }";
        let (_, edges, _, exit) = cfg_of(src);
        let ret = id_of(src, NodeType::ReturnStatement, 0);
        let after = id_of(src, NodeType::ExpressionStmt, 0);
        assert!(edges.contains(&(ret, exit)));
        assert!(!edges.contains(&(ret, after)), "no fallthrough from return");
    }

    #[test]
    fn empty_while_body_self_loops() {
        let src = "void f() { int i = 0; while (i < 1) {} }";
        let (_, edges, _, _) = cfg_of(src);
        let cond = id_of(src, NodeType::Condition, 0);
        assert!(edges.contains(&(cond, cond)));
    }
}
