//! Brute-force reference implementations for the flow analyses, built on
//! deliberately different algorithms than the production code so the two
//! can cross-check each other:
//!
//! * dominators / postdominators via removal reachability ("d dominates v
//!   iff deleting d disconnects v from entry"), not iterative dataflow;
//! * control dependence straight from its definition over postdominator
//!   sets, not a tree walk;
//! * reaching definitions via exhaustive path enumeration (acyclic
//!   graphs) and via a round-robin set fixpoint (any graph), not a
//!   worklist over bitsets;
//! * average precision via an O(n²) threshold sweep that recomputes the
//!   full confusion matrix from scratch at every distinct score, not a
//!   single incremental pass over a sorted ranking.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};
use vulngraph::cpg::flow::{
    control_dependences, immediate_dominators, immediate_postdominators, reaching_definitions,
    FlowGraph,
};

/// Vertices reachable from `from` when `removed` is deleted from the graph.
fn reachable_without(g: &FlowGraph, from: usize, removed: Option<usize>) -> Vec<bool> {
    let mut seen = vec![false; g.len()];
    if Some(from) == removed {
        return seen;
    }
    seen[from] = true;
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for &s in g.succs(v) {
            if Some(s) != removed && !seen[s] {
                seen[s] = true;
                stack.push(s);
            }
        }
    }
    seen
}

fn reversed(g: &FlowGraph) -> FlowGraph {
    let edges: Vec<(usize, usize)> = g.edges().map(|(a, b)| (b, a)).collect();
    FlowGraph::new(g.len(), g.exit(), g.entry(), &edges)
}

/// Full dominator sets by removal reachability: `d ∈ dom(v)` iff every
/// entry→v path passes through `d`. Unreachable vertices get empty sets.
pub fn dominator_sets(g: &FlowGraph) -> Vec<Vec<usize>> {
    let base = reachable_without(g, g.entry(), None);
    let cut: Vec<Vec<bool>> = (0..g.len())
        .map(|d| reachable_without(g, g.entry(), Some(d)))
        .collect();
    (0..g.len())
        .map(|v| {
            if !base[v] {
                return Vec::new();
            }
            (0..g.len()).filter(|&d| d == v || !cut[d][v]).collect()
        })
        .collect()
}

/// Immediate dominators derived from [`dominator_sets`]: the strict
/// dominator with the largest dominator set (dominators form a chain).
pub fn idom_oracle(g: &FlowGraph) -> Vec<Option<usize>> {
    let sets = dominator_sets(g);
    (0..g.len())
        .map(|v| {
            if v == g.entry() || sets[v].is_empty() {
                return None;
            }
            sets[v]
                .iter()
                .copied()
                .filter(|&d| d != v)
                .max_by_key(|&d| sets[d].len())
        })
        .collect()
}

pub fn ipostdom_oracle(g: &FlowGraph) -> Vec<Option<usize>> {
    idom_oracle(&reversed(g))
}

/// Control dependence by definition: `n` depends on `c` iff some edge
/// `(c, s)` exists with `n` postdominating `s` while `n` does not
/// strictly postdominate `c`.
pub fn control_deps_oracle(g: &FlowGraph) -> Vec<(usize, usize)> {
    let pdom = dominator_sets(&reversed(g));
    let mut deps = Vec::new();
    for (c, s) in g.edges() {
        for n in 0..g.len() {
            let pdoms_branch = pdom[s].contains(&n);
            let strictly_pdoms_controller = n != c && pdom[c].contains(&n);
            if pdoms_branch && !strictly_pdoms_controller {
                deps.push((c, n));
            }
        }
    }
    deps.sort_unstable();
    deps.dedup();
    deps
}

/// Reaching definitions by path enumeration — only sound on acyclic
/// graphs. The definition of `var` at `d` reaches the use at `u` iff a
/// path `d → … → u` (length ≥ 1) exists whose interior vertices never
/// redefine `var`.
pub fn reaching_defs_paths(
    g: &FlowGraph,
    defs: &[Vec<u32>],
    uses: &[Vec<u32>],
) -> Vec<(usize, usize, u32)> {
    fn clear_path_to(
        g: &FlowGraph,
        x: usize,
        u: usize,
        var: u32,
        defs: &[Vec<u32>],
        memo: &mut HashMap<usize, bool>,
    ) -> bool {
        if x == u {
            return true;
        }
        if let Some(&hit) = memo.get(&x) {
            return hit;
        }
        let hit = !defs[x].contains(&var)
            && g.succs(x)
                .iter()
                .any(|&s| clear_path_to(g, s, u, var, defs, memo));
        memo.insert(x, hit);
        hit
    }

    let mut result = Vec::new();
    for (u, used) in uses.iter().enumerate() {
        for &var in used {
            let mut memo = HashMap::new();
            for (d, defined) in defs.iter().enumerate() {
                if defined.contains(&var)
                    && g.succs(d)
                        .iter()
                        .any(|&s| clear_path_to(g, s, u, var, defs, &mut memo))
                {
                    result.push((d, u, var));
                }
            }
        }
    }
    result.sort_unstable();
    result.dedup();
    result
}

/// Reaching definitions by a round-robin fixpoint over hash sets — a
/// different evaluation order and data representation than the worklist
/// implementation under test. Sound on any graph.
pub fn reaching_defs_round_robin(
    g: &FlowGraph,
    defs: &[Vec<u32>],
    uses: &[Vec<u32>],
) -> Vec<(usize, usize, u32)> {
    let n = g.len();
    let mut inn: Vec<HashSet<(usize, u32)>> = vec![HashSet::new(); n];
    let mut out: Vec<HashSet<(usize, u32)>> = vec![HashSet::new(); n];
    loop {
        let mut changed = false;
        for v in 0..n {
            let mut iv = HashSet::new();
            for &p in g.preds(v) {
                iv.extend(out[p].iter().copied());
            }
            let mut ov: HashSet<(usize, u32)> = iv
                .iter()
                .copied()
                .filter(|&(_, var)| !defs[v].contains(&var))
                .collect();
            ov.extend(defs[v].iter().map(|&var| (v, var)));
            if iv != inn[v] || ov != out[v] {
                changed = true;
                inn[v] = iv;
                out[v] = ov;
            }
        }
        if !changed {
            break;
        }
    }
    let mut result = Vec::new();
    for (u, used) in uses.iter().enumerate() {
        for &var in used {
            for &(d, dvar) in &inn[u] {
                if dvar == var {
                    result.push((d, u, var));
                }
            }
        }
    }
    result.sort_unstable();
    result.dedup();
    result
}

/// Random flow graph obeying the CFG invariants: entry 0, exit n−1,
/// every vertex reachable from entry and able to reach exit. Cyclic
/// graphs may contain back edges and self-loops (never on entry/exit).
pub fn random_cfg(rng: &mut ChaCha8Rng, max_n: usize, acyclic: bool) -> FlowGraph {
    let n = rng.gen_range(2..=max_n.max(2));
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v)); // reachable from entry
    }
    for v in 0..n - 1 {
        edges.push((v, rng.gen_range(v + 1..n))); // reaches exit
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        let a = rng.gen_range(0..n - 1);
        let b = if acyclic {
            rng.gen_range(a + 1..n)
        } else {
            rng.gen_range(1..n)
        };
        edges.push((a, b));
    }
    FlowGraph::new(n, 0, n - 1, &edges)
}

/// Random def/use sets over a small variable universe.
pub fn random_def_use(rng: &mut ChaCha8Rng, n: usize, nvars: u32) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let pick = |rng: &mut ChaCha8Rng| -> Vec<u32> {
        (0..nvars).filter(|_| rng.gen_bool(0.4)).collect()
    };
    let defs = (0..n).map(|_| pick(rng)).collect();
    let uses = (0..n).map(|_| pick(rng)).collect();
    (defs, uses)
}

/// Average precision by brute force: sweep every distinct score as a
/// threshold (descending) and recompute precision and recall with a full
/// pass over all items each time, then step-integrate
/// Σ (Rᵢ − Rᵢ₋₁) · Pᵢ. Requires at least one positive label.
pub fn ap_brute_force(scores: &[f64], labels: &[u8]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|&&y| y == 1).count();
    assert!(positives > 0, "ap_brute_force needs at least one positive");

    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    thresholds.dedup();

    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &y) in scores.iter().zip(labels) {
            if s >= t {
                if y == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Cross-check every flow analysis against its reference implementation
/// on `graphs` random CFGs (alternating acyclic/cyclic) of at most
/// `max_n` vertices. Returns the first mismatch, described.
pub fn verify_flow_algorithms(graphs: usize, max_n: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..graphs {
        let acyclic = i % 2 == 0;
        let g = random_cfg(&mut rng, max_n, acyclic);
        let describe = || {
            let edges: Vec<(usize, usize)> = g.edges().collect();
            format!("graph {i} (n={}, acyclic={acyclic}, edges={edges:?})", g.len())
        };

        let idom = immediate_dominators(&g);
        let idom_ref = idom_oracle(&g);
        if idom != idom_ref {
            return Err(format!("{}: idom {idom:?} != reference {idom_ref:?}", describe()));
        }

        let ipdom = immediate_postdominators(&g);
        let ipdom_ref = ipostdom_oracle(&g);
        if ipdom != ipdom_ref {
            return Err(format!(
                "{}: ipostdom {ipdom:?} != reference {ipdom_ref:?}",
                describe()
            ));
        }

        let cdeps = control_dependences(&g);
        let cdeps_ref = control_deps_oracle(&g);
        if cdeps != cdeps_ref {
            return Err(format!(
                "{}: control deps {cdeps:?} != reference {cdeps_ref:?}",
                describe()
            ));
        }

        let (defs, uses) = random_def_use(&mut rng, g.len(), 3);
        let rd = reaching_definitions(&g, &defs, &uses);
        let rd_rr = reaching_defs_round_robin(&g, &defs, &uses);
        if rd != rd_rr {
            return Err(format!(
                "{}: reaching defs {rd:?} != round-robin reference {rd_rr:?} (defs={defs:?}, uses={uses:?})",
                describe()
            ));
        }
        if acyclic {
            let rd_paths = reaching_defs_paths(&g, &defs, &uses);
            if rd != rd_paths {
                return Err(format!(
                    "{}: reaching defs {rd:?} != path-enumeration reference {rd_paths:?} (defs={defs:?}, uses={uses:?})",
                    describe()
                ));
            }
        }
    }
    Ok(())
}
