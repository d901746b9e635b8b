//! Cross-checks the flow analyses (dominators, postdominators, control
//! dependence, reaching definitions) against brute-force reference
//! implementations on fixed fixtures and random control-flow graphs.

mod common;

use common::oracles::{
    control_deps_oracle, idom_oracle, ipostdom_oracle, reaching_defs_paths,
    reaching_defs_round_robin, verify_flow_algorithms,
};
use vulngraph::cpg::flow::{
    control_dependences, immediate_dominators, reaching_definitions, FlowGraph,
};

/// 0 → {1,2} → 3: the canonical diamond.
fn diamond() -> FlowGraph {
    FlowGraph::new(4, 0, 3, &[(0, 1), (0, 2), (1, 3), (2, 3)])
}

/// 0 → 1 ⇄ 2, 1 → 3: a while loop (1 is the condition).
fn loop_graph() -> FlowGraph {
    FlowGraph::new(4, 0, 3, &[(0, 1), (1, 2), (2, 1), (1, 3)])
}

#[test]
fn reference_idom_matches_known_values_on_diamond() {
    let g = diamond();
    assert_eq!(idom_oracle(&g), vec![None, Some(0), Some(0), Some(0)]);
    assert_eq!(ipostdom_oracle(&g), vec![Some(3), Some(3), Some(3), None]);
    assert_eq!(immediate_dominators(&g), idom_oracle(&g));
}

#[test]
fn reference_control_deps_match_known_values() {
    assert_eq!(control_deps_oracle(&diamond()), vec![(0, 1), (0, 2)]);
    // The loop condition controls itself and its body.
    assert_eq!(control_deps_oracle(&loop_graph()), vec![(1, 1), (1, 2)]);
    assert_eq!(control_dependences(&loop_graph()), vec![(1, 1), (1, 2)]);
}

#[test]
fn reference_reaching_defs_match_known_values() {
    // 0 defines x; 1 redefines it on one branch only; 3 uses it.
    let g = diamond();
    let defs = vec![vec![0], vec![0], vec![], vec![]];
    let uses = vec![vec![], vec![], vec![], vec![0]];
    let expected = vec![(0, 3, 0), (1, 3, 0)];
    assert_eq!(reaching_defs_paths(&g, &defs, &uses), expected);
    assert_eq!(reaching_defs_round_robin(&g, &defs, &uses), expected);
    assert_eq!(reaching_definitions(&g, &defs, &uses), expected);
}

#[test]
fn loop_carried_definitions_flow_back_to_the_condition() {
    // Body (2) redefines x; the condition (1) uses it. Both the initial
    // definition at 0 and the loop-carried one at 2 must reach 1.
    let g = loop_graph();
    let defs = vec![vec![0], vec![], vec![0], vec![]];
    let uses = vec![vec![], vec![0], vec![], vec![]];
    let expected = vec![(0, 1, 0), (2, 1, 0)];
    assert_eq!(reaching_defs_round_robin(&g, &defs, &uses), expected);
    assert_eq!(reaching_definitions(&g, &defs, &uses), expected);
}

#[test]
fn analyses_agree_with_references_on_random_cfgs() {
    verify_flow_algorithms(120, 12, 0x5eed).unwrap();
}

#[test]
fn analyses_agree_with_references_on_larger_random_cfgs() {
    verify_flow_algorithms(30, 24, 0xbead).unwrap();
}
