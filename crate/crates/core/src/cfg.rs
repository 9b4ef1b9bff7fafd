//! Control-flow graph over statement nodes.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::lang::{Program, Stmt, StmtId, StmtKind};

/// Where control goes after a node executes (forward direction).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    /// Plain fall-through; `None` means the program ends.
    Next(Option<StmtId>),
    /// `if` and `while` headers.
    Branch { on_true: Option<StmtId>, on_false: Option<StmtId> },
    /// `abort`
    Stop,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    preds: Vec<Vec<StmtId>>,
    succs: Vec<Vec<StmtId>>,
    flow: Vec<Flow>,
    in_cycle: BTreeSet<(StmtId, StmtId)>,
    loop_body: BTreeMap<StmtId, BTreeSet<StmtId>>,
    entry: Option<StmtId>,
}

pub fn build_cfg(p: &Program) -> Cfg {
    let n = p.nodes.len();
    let mut b = Builder { flow: vec![Flow::Stop; n], loop_body: BTreeMap::new() };
    let entry = b.block(&p.body, None);

    let mut succs: Vec<Vec<StmtId>> = vec![Vec::new(); n];
    for (i, f) in b.flow.iter().enumerate() {
        let out = &mut succs[i];
        let mut push = |t: Option<StmtId>| {
            if let Some(t) = t {
                if !out.contains(&t) {
                    out.push(t);
                }
            }
        };
        match *f {
            Flow::Next(t) => push(t),
            Flow::Branch { on_true, on_false } => {
                push(on_true);
                push(on_false);
            }
            Flow::Stop => {}
        }
    }
    let mut preds: Vec<Vec<StmtId>> = vec![Vec::new(); n];
    for (i, ss) in succs.iter().enumerate() {
        for s in ss {
            preds[s.index()].push(StmtId(i as u32));
        }
    }
    for ps in &mut preds {
        ps.sort();
    }

    let mut g = DiGraph::<(), ()>::with_capacity(n, n * 2);
    let idx: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for (i, ss) in succs.iter().enumerate() {
        for s in ss {
            g.add_edge(idx[i], idx[s.index()], ());
        }
    }
    let mut comp = vec![usize::MAX; n];
    for (c, scc) in tarjan_scc(&g).into_iter().enumerate() {
        for v in scc {
            comp[v.index()] = c;
        }
    }
    let mut in_cycle = BTreeSet::new();
    for (i, ss) in succs.iter().enumerate() {
        for s in ss {
            let j = s.index();
            if i == j || comp[i] == comp[j] {
                in_cycle.insert((StmtId(i as u32), *s));
            }
        }
    }

    Cfg { preds, succs, flow: b.flow, in_cycle, loop_body: b.loop_body, entry }
}

struct Builder {
    flow: Vec<Flow>,
    loop_body: BTreeMap<StmtId, BTreeSet<StmtId>>,
}

impl Builder {
    /// Wire a block whose fall-through continues at `next`; returns the
    /// block's first node, or `next` when the block is empty.
    fn block(&mut self, stmts: &[Stmt], next: Option<StmtId>) -> Option<StmtId> {
        let mut cont = next;
        for s in stmts.iter().rev() {
            cont = Some(self.stmt(s, cont));
        }
        cont
    }

    fn stmt(&mut self, s: &Stmt, next: Option<StmtId>) -> StmtId {
        match &s.kind {
            StmtKind::If { then_body, else_id, else_body, .. } => {
                let then_entry = self.block(then_body, next);
                let else_entry = self.block(else_body, next);
                self.flow[s.id.index()] = Flow::Branch { on_true: then_entry, on_false: Some(*else_id) };
                self.flow[else_id.index()] = Flow::Next(else_entry);
            }
            StmtKind::While { body, .. } => {
                let body_entry = self.block(body, Some(s.id));
                self.flow[s.id.index()] = Flow::Branch { on_true: body_entry, on_false: next };
                let mut nested = BTreeSet::new();
                collect_ids(body, &mut nested);
                self.loop_body.insert(s.id, nested);
            }
            StmtKind::Abort => self.flow[s.id.index()] = Flow::Stop,
            _ => self.flow[s.id.index()] = Flow::Next(next),
        }
        s.id
    }
}

fn collect_ids(stmts: &[Stmt], out: &mut BTreeSet<StmtId>) {
    for s in stmts {
        out.insert(s.id);
        match &s.kind {
            StmtKind::If { then_body, else_id, else_body, .. } => {
                collect_ids(then_body, out);
                out.insert(*else_id);
                collect_ids(else_body, out);
            }
            StmtKind::While { body, .. } => collect_ids(body, out),
            _ => {}
        }
    }
}

impl Cfg {
    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    /// First statement executed by the program.
    pub fn entry(&self) -> Option<StmtId> {
        self.entry
    }

    /// Predecessors sorted by ascending id.
    pub fn preds(&self, id: StmtId) -> &[StmtId] {
        &self.preds[id.index()]
    }

    pub fn succs(&self, id: StmtId) -> &[StmtId] {
        &self.succs[id.index()]
    }

    pub fn flow(&self, id: StmtId) -> Flow {
        self.flow[id.index()]
    }

    pub fn is_in_cycle(&self, from: StmtId, to: StmtId) -> bool {
        self.in_cycle.contains(&(from, to))
    }

    pub fn in_cycle_edges(&self) -> &BTreeSet<(StmtId, StmtId)> {
        &self.in_cycle
    }

    /// Statements nested under a `while`, including `else` pseudo-nodes.
    pub fn loop_body(&self, w: StmtId) -> Option<&BTreeSet<StmtId>> {
        self.loop_body.get(&w)
    }

    pub fn loops(&self) -> impl Iterator<Item = (StmtId, &BTreeSet<StmtId>)> {
        self.loop_body.iter().map(|(k, v)| (*k, v))
    }

    /// All edges as (from, to), sorted.
    pub fn edges(&self) -> Vec<(StmtId, StmtId)> {
        let mut out: Vec<_> = self
            .succs
            .iter()
            .enumerate()
            .flat_map(|(i, ss)| ss.iter().map(move |s| (StmtId(i as u32), *s)))
            .collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn ids(v: &[StmtId]) -> Vec<u32> {
        v.iter().map(|s| s.0).collect()
    }

    #[test]
    fn straight_line_has_single_preds_and_no_cycles() {
        let p = parse_program("int x; x = 1; x = 2; x = 3;").unwrap();
        let c = build_cfg(&p);
        assert!(c.preds(StmtId(0)).is_empty());
        assert_eq!(ids(c.preds(StmtId(1))), vec![0]);
        assert_eq!(ids(c.preds(StmtId(2))), vec![1]);
        assert!(c.in_cycle_edges().is_empty());
    }

    #[test]
    fn loop_null_shape() {
        let src = "int i, W, *p, r; i = 0;\n\
                   W = newSymbolic;\n\
                   while (i < W) {\n\
                   i = i + 1; }\n\
                   if (W == 1000) {\n\
                   p = NULL; *p = 7; r = *p; }\n";
        let p = parse_program(src).unwrap();
        let c = build_cfg(&p);
        let w = p.resolve_location("3").unwrap();
        let body = p.resolve_location("4").unwrap();
        let iff = p.resolve_location("5").unwrap();
        let sym = p.resolve_location("2").unwrap();
        assert_eq!(c.preds(iff), &[w]);
        assert_eq!(c.preds(body), &[w]);
        assert_eq!(c.preds(w), &[sym, body]);
        assert!(c.is_in_cycle(w, body));
        assert!(c.is_in_cycle(body, w));
        assert!(!c.is_in_cycle(w, iff));
    }

    #[test]
    fn if_join_has_both_tails() {
        let p = parse_program("int x; if (x) { x = 1; } else { x = 2; } x = 3;").unwrap();
        let c = build_cfg(&p);
        // ids: if 0, then 1, else 2, else-body 3, join 4
        assert_eq!(ids(c.preds(StmtId(4))), vec![1, 3]);
        assert_eq!(ids(c.preds(StmtId(2))), vec![0]);
        assert_eq!(c.flow(StmtId(0)), Flow::Branch { on_true: Some(StmtId(1)), on_false: Some(StmtId(2)) });
    }

    #[test]
    fn empty_then_goes_to_join() {
        let p = parse_program("int x; if (x) { } x = 3;").unwrap();
        let c = build_cfg(&p);
        assert_eq!(ids(c.succs(StmtId(0))), vec![2, 1]);
        assert_eq!(ids(c.preds(StmtId(2))), vec![0, 1]);
    }

    #[test]
    fn empty_while_is_self_loop() {
        let p = parse_program("int x; while (x) { } skip;").unwrap();
        let c = build_cfg(&p);
        assert!(c.is_in_cycle(StmtId(0), StmtId(0)));
        assert_eq!(ids(c.preds(StmtId(0))), vec![0]);
    }

    #[test]
    fn abort_has_no_successors() {
        let p = parse_program("int x; abort; x = 1;").unwrap();
        let c = build_cfg(&p);
        assert!(c.succs(StmtId(0)).is_empty());
        assert!(c.preds(StmtId(1)).is_empty());
    }

    #[test]
    fn loop_body_contains_nested_else() {
        let p = parse_program("int x; while (x) { if (x) { x = 1; } x = 2; }").unwrap();
        let c = build_cfg(&p);
        let body: Vec<u32> = c.loop_body(StmtId(0)).unwrap().iter().map(|s| s.0).collect();
        assert_eq!(body, vec![1, 2, 3, 4]);
    }

    /// Edges lying on some simple cycle, found by brute-force DFS.
    fn cycle_edges_brute(c: &Cfg) -> BTreeSet<(StmtId, StmtId)> {
        fn dfs(c: &Cfg, start: StmtId, cur: StmtId, path: &mut Vec<StmtId>, out: &mut BTreeSet<(StmtId, StmtId)>) {
            for &n in c.succs(cur) {
                if n == start {
                    let mut cyc = path.clone();
                    cyc.push(start);
                    for w in cyc.windows(2) {
                        out.insert((w[0], w[1]));
                    }
                } else if n > start && !path.contains(&n) {
                    path.push(n);
                    dfs(c, start, n, path, out);
                    path.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        for i in 0..c.len() {
            let s = StmtId(i as u32);
            dfs(c, s, s, &mut vec![s], &mut out);
        }
        out
    }

    #[test]
    fn nested_loops_match_brute_force_cycles() {
        let src = "int x, y; x = 0; while (x < 3) { y = 0; while (y < 2) { y = y + 1; } x = x + 1; } skip;";
        let p = parse_program(src).unwrap();
        let c = build_cfg(&p);
        assert!(c.len() <= 10);
        assert_eq!(c.in_cycle_edges(), &cycle_edges_brute(&c));
        // outer back edge and inner body edges are all in cycles
        assert!(c.is_in_cycle(StmtId(5), StmtId(1)));
        assert!(c.is_in_cycle(StmtId(3), StmtId(4)));
        assert!(c.is_in_cycle(StmtId(4), StmtId(3)));
    }

    #[test]
    fn pred_succ_consistent() {
        let src = "int x; if (x) { while (x) { x = x - 1; } } else { abort; } x = 2;";
        let p = parse_program(src).unwrap();
        let c = build_cfg(&p);
        for (a, b) in c.edges() {
            assert!(c.preds(b).contains(&a));
        }
        for i in 0..c.len() {
            let b = StmtId(i as u32);
            for a in c.preds(b) {
                assert!(c.succs(*a).contains(&b));
            }
        }
    }
}
