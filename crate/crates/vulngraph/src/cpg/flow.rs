//! Flow-graph analyses shared by CPG construction and reusable on bare
//! graphs: immediate dominators/post-dominators, control dependence and
//! reaching definitions.
//!
//! All algorithms are iterative dataflow formulations over bitsets run to
//! fixpoint. Graphs here are small (≤ 699 nodes per function), so the
//! simple quadratic-ish fixpoint is both fast enough and easy to check
//! against brute-force oracles.

/// A directed flow graph over vertices `0..len` with designated entry and
/// exit. Edges are deduplicated and adjacency lists sorted, so identical
/// edge multisets produce identical analyses.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    entry: usize,
    exit: usize,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
}

impl FlowGraph {
    pub fn new(len: usize, entry: usize, exit: usize, edges: &[(usize, usize)]) -> FlowGraph {
        assert!(entry < len && exit < len, "entry/exit out of range");
        let mut succs = vec![Vec::new(); len];
        let mut preds = vec![Vec::new(); len];
        for &(a, b) in edges {
            assert!(a < len && b < len, "edge ({a}, {b}) out of range");
            succs[a].push(b);
            preds[b].push(a);
        }
        for list in succs.iter_mut().chain(preds.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        FlowGraph { entry, exit, succs, preds }
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn exit(&self) -> usize {
        self.exit
    }

    pub fn succs(&self, v: usize) -> &[usize] {
        &self.succs[v]
    }

    pub fn preds(&self, v: usize) -> &[usize] {
        &self.preds[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succs
            .iter()
            .enumerate()
            .flat_map(|(a, outs)| outs.iter().map(move |&b| (a, b)))
    }

    /// The same graph with every edge reversed and entry/exit swapped.
    pub fn reversed(&self) -> FlowGraph {
        FlowGraph {
            entry: self.exit,
            exit: self.entry,
            succs: self.preds.clone(),
            preds: self.succs.clone(),
        }
    }

    /// Vertices reachable from the entry.
    pub fn reachable_from_entry(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.entry];
        seen[self.entry] = true;
        while let Some(v) = stack.pop() {
            for &s in &self.succs[v] {
                if !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        seen
    }

    /// Vertices from which the exit is reachable.
    pub fn reaches_exit(&self) -> Vec<bool> {
        self.reversed().reachable_from_entry()
    }

    /// Reverse postorder over the subgraph reachable from entry.
    fn reverse_postorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut seen = vec![false; self.len()];
        // Iterative DFS with an explicit "children done" marker.
        let mut stack = vec![(self.entry, false)];
        while let Some((v, done)) = stack.pop() {
            if done {
                order.push(v);
                continue;
            }
            if seen[v] {
                continue;
            }
            seen[v] = true;
            stack.push((v, true));
            for &s in self.succs[v].iter().rev() {
                if !seen[s] {
                    stack.push((s, false));
                }
            }
        }
        order.reverse();
        order
    }
}

// --- bitset helpers ---------------------------------------------------------

type BitRow = Vec<u64>;

fn row_full(n: usize) -> BitRow {
    let words = n.div_ceil(64);
    let mut row = vec![u64::MAX; words];
    if n % 64 != 0 {
        row[words - 1] = (1u64 << (n % 64)) - 1;
    }
    row
}

fn row_empty(n: usize) -> BitRow {
    vec![0u64; n.div_ceil(64)]
}

fn row_set(row: &mut BitRow, i: usize) {
    row[i / 64] |= 1 << (i % 64);
}

fn row_ones(row: &BitRow) -> impl Iterator<Item = usize> + '_ {
    row.iter().enumerate().flat_map(|(w, &bits)| {
        (0..64).filter(move |b| bits >> b & 1 == 1).map(move |b| w * 64 + b)
    })
}

// --- dominators -------------------------------------------------------------

/// Immediate dominators w.r.t. the entry, by the classic iterative
/// set-intersection dataflow: `dom(v) = {v} ∪ ⋂ dom(preds)` to fixpoint.
/// `None` for the entry and for vertices unreachable from it.
pub fn immediate_dominators(g: &FlowGraph) -> Vec<Option<usize>> {
    let n = g.len();
    let reachable = g.reachable_from_entry();
    let order = g.reverse_postorder();

    let mut dom: Vec<BitRow> = (0..n).map(|_| row_full(n)).collect();
    dom[g.entry()] = row_empty(n);
    row_set(&mut dom[g.entry()], g.entry());

    let mut changed = true;
    while changed {
        changed = false;
        for &v in &order {
            if v == g.entry() {
                continue;
            }
            // Intersection over reachable predecessors. Unreachable
            // predecessors keep the full set, so including them would be
            // a no-op anyway; skipping keeps intent clear.
            let mut new = row_full(n);
            for &p in g.preds(v) {
                if reachable[p] {
                    for (word, pw) in new.iter_mut().zip(&dom[p]) {
                        *word &= pw;
                    }
                }
            }
            row_set(&mut new, v);
            if new != dom[v] {
                dom[v] = new;
                changed = true;
            }
        }
    }

    // The strict dominators of v form a chain in the dominator tree; the
    // immediate one is the deepest, i.e. the one with the largest
    // dominator set of its own.
    (0..n)
        .map(|v| {
            if v == g.entry() || !reachable[v] {
                return None;
            }
            row_ones(&dom[v])
                .filter(|&d| d != v)
                .max_by_key(|&d| dom[d].iter().map(|w| w.count_ones()).sum::<u32>())
        })
        .collect()
}

/// Immediate post-dominators w.r.t. the exit: dominators of the reversed
/// graph. `None` for the exit and for vertices that cannot reach it.
pub fn immediate_postdominators(g: &FlowGraph) -> Vec<Option<usize>> {
    immediate_dominators(&g.reversed())
}

// --- control dependence -----------------------------------------------------

/// Control-dependence pairs `(controller, controlled)`: `b` is control
/// dependent on `a` iff `a` has a successor from which `b` is always
/// reached (b post-dominates it) but `b` does not strictly post-dominate
/// `a`. Computed by walking the post-dominator tree from each branch
/// successor up to (exclusive) the branch's own immediate post-dominator.
pub fn control_dependences(g: &FlowGraph) -> Vec<(usize, usize)> {
    let ipdom = immediate_postdominators(g);
    let mut deps = Vec::new();
    for (a, b) in g.edges() {
        if ipdom[a] == Some(b) {
            continue;
        }
        let mut cur = Some(b);
        while let Some(c) = cur {
            if Some(c) == ipdom[a] {
                break;
            }
            deps.push((a, c));
            cur = ipdom[c];
        }
    }
    deps.sort_unstable();
    deps.dedup();
    deps
}

// --- reaching definitions ---------------------------------------------------

/// Reaching definitions over a flow graph with per-vertex def/use sets of
/// variable ids. Returns `(def_vertex, use_vertex, var)` triples: the
/// definition of `var` at `def_vertex` reaches the entry of `use_vertex`,
/// which reads `var`. Classic gen/kill worklist fixpoint.
pub fn reaching_definitions(
    g: &FlowGraph,
    defs: &[Vec<u32>],
    uses: &[Vec<u32>],
) -> Vec<(usize, usize, u32)> {
    let n = g.len();
    assert_eq!(defs.len(), n);
    assert_eq!(uses.len(), n);

    // Enumerate definition sites.
    let mut sites: Vec<(usize, u32)> = Vec::new();
    for (v, dv) in defs.iter().enumerate() {
        let mut dv: Vec<u32> = dv.clone();
        dv.sort_unstable();
        dv.dedup();
        for var in dv {
            sites.push((v, var));
        }
    }
    let ns = sites.len();

    let mut gen = vec![row_empty(ns); n];
    let mut kill = vec![row_empty(ns); n];
    for (i, &(v, var)) in sites.iter().enumerate() {
        row_set(&mut gen[v], i);
        for (j, &(w, wvar)) in sites.iter().enumerate() {
            if wvar == var && w != v {
                row_set(&mut kill[v], j);
            }
        }
    }

    let mut input = vec![row_empty(ns); n];
    let mut out = vec![row_empty(ns); n];
    // out(v) = gen(v) ∪ (in(v) \ kill(v)); in(v) = ∪ out(preds).
    let mut worklist: Vec<usize> = (0..n).collect();
    let mut queued = vec![true; n];
    while let Some(v) = worklist.pop() {
        queued[v] = false;
        let mut new_in = row_empty(ns);
        for &p in g.preds(v) {
            for (word, pw) in new_in.iter_mut().zip(&out[p]) {
                *word |= pw;
            }
        }
        let mut new_out = gen[v].clone();
        for ((word, iw), kw) in new_out.iter_mut().zip(&new_in).zip(&kill[v]) {
            *word |= iw & !kw;
        }
        input[v] = new_in;
        if new_out != out[v] {
            out[v] = new_out;
            for &s in g.succs(v) {
                if !queued[s] {
                    queued[s] = true;
                    worklist.push(s);
                }
            }
        }
    }

    let mut result = Vec::new();
    for (u, used) in uses.iter().enumerate() {
        let mut used: Vec<u32> = used.clone();
        used.sort_unstable();
        used.dedup();
        for var in used {
            for i in row_ones(&input[u]) {
                let (d, dvar) = sites[i];
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

#[cfg(test)]
mod tests {
    use super::*;

    /// ENTRY(0) → s1(1) → s2(2) → EXIT(3)
    fn chain() -> FlowGraph {
        FlowGraph::new(4, 0, 3, &[(0, 1), (1, 2), (2, 3)])
    }

    /// 0=entry, 1=cond, 2=then, 3=join, 4=exit
    fn diamond() -> FlowGraph {
        FlowGraph::new(5, 0, 4, &[(0, 1), (1, 2), (1, 3), (2, 3), (3, 4)])
    }

    /// 0=entry, 1=cond, 2=body, 3=exit; back edge 2→1.
    fn while_loop() -> FlowGraph {
        FlowGraph::new(4, 0, 3, &[(0, 1), (1, 2), (2, 1), (1, 3)])
    }

    #[test]
    fn chain_dominance() {
        let idom = immediate_dominators(&chain());
        assert_eq!(idom, vec![None, Some(0), Some(1), Some(2)]);
        let ipdom = immediate_postdominators(&chain());
        assert_eq!(ipdom, vec![Some(1), Some(2), Some(3), None]);
    }

    #[test]
    fn diamond_dominance_and_control() {
        let g = diamond();
        let idom = immediate_dominators(&g);
        assert_eq!(idom, vec![None, Some(0), Some(1), Some(1), Some(3)]);
        let ipdom = immediate_postdominators(&g);
        // then(2) is post-dominated by join(3); cond(1) likewise.
        assert_eq!(ipdom[1], Some(3));
        assert_eq!(ipdom[2], Some(3));
        // Only the then-branch is control dependent on the condition.
        assert_eq!(control_dependences(&g), vec![(1, 2)]);
    }

    #[test]
    fn loop_condition_controls_body_and_itself() {
        let g = while_loop();
        let deps = control_dependences(&g);
        assert_eq!(deps, vec![(1, 1), (1, 2)]);
    }

    #[test]
    fn straight_line_has_no_control_deps() {
        assert!(control_dependences(&chain()).is_empty());
    }

    #[test]
    fn unreachable_vertices_have_no_idom() {
        // 0 → 1 → 3(exit); 2 dangles.
        let g = FlowGraph::new(4, 0, 3, &[(0, 1), (1, 3)]);
        let idom = immediate_dominators(&g);
        assert_eq!(idom[2], None);
        assert_eq!(idom[1], Some(0));
    }

    #[test]
    fn reaching_defs_kill_semantics() {
        // 0: def x; 1: def x (kills); 2: use x; chain 0→1→2→3.
        let g = chain();
        let defs = vec![vec![7], vec![7], vec![], vec![]];
        let uses = vec![vec![], vec![], vec![7], vec![]];
        assert_eq!(reaching_definitions(&g, &defs, &uses), vec![(1, 2, 7)]);
    }

    #[test]
    fn reaching_defs_merge_at_join() {
        // diamond: def x at entry(0) and at then(2); join(3) uses x → both reach.
        let g = diamond();
        let defs = vec![vec![1], vec![], vec![1], vec![], vec![]];
        let uses = vec![vec![], vec![], vec![], vec![1], vec![]];
        assert_eq!(reaching_definitions(&g, &defs, &uses), vec![(0, 3, 1), (2, 3, 1)]);
    }

    #[test]
    fn reaching_defs_around_loop() {
        // while: def x in body(2), cond(1) uses x, body also uses x.
        let g = while_loop();
        let defs = vec![vec![0], vec![], vec![0], vec![]];
        let uses = vec![vec![], vec![0], vec![0], vec![]];
        let got = reaching_definitions(&g, &defs, &uses);
        // Entry def and body def both reach the condition; both reach the body.
        assert_eq!(got, vec![(0, 1, 0), (0, 2, 0), (2, 1, 0), (2, 2, 0)]);
    }
}
