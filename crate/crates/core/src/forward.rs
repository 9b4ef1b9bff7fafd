//! Forward pass over a backward path: map abstract objects onto concrete
//! ones, resolve memory reads against earlier stores, then collect path
//! constraints, memory errors and replay inputs.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::expr::{object_at, AddressExpr, Expr, ExprKind, ObjectNames, ObjectRef};
use crate::lang::{NodeKind, Program, StmtId};
use crate::mem::{transitive_closure, AccessKind, BackwardState, ByteStore, UnifPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ErrorKind {
    NullDereference,
    OutOfBounds,
    UseAfterFree,
    DoubleFree,
    InvalidFree,
    MemoryLeak,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::NullDereference => "null-dereference",
            ErrorKind::OutOfBounds => "out-of-bounds",
            ErrorKind::UseAfterFree => "use-after-free",
            ErrorKind::DoubleFree => "double-free",
            ErrorKind::InvalidFree => "invalid-free",
            ErrorKind::MemoryLeak => "memory-leak",
        }
    }
}

/// A memory error found on a feasible path.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, thiserror::Error)]
#[error("{} at {location}: {detail}", kind.name())]
pub struct MemoryError {
    pub kind: ErrorKind,
    pub stmt: StmtId,
    pub location: String,
    pub detail: String,
    /// Object involved, `NULL` for null dereferences.
    pub object: String,
    /// Forward-order step indices of the statements involved.
    pub steps: Vec<usize>,
}

impl MemoryError {
    /// Identity used when merging reports from several paths.
    pub fn key(&self) -> (ErrorKind, StmtId, &str, &str) {
        (self.kind, self.stmt, &self.object, &self.detail)
    }
}

/// Append errors not already present by key, then sort.
pub fn merge_errors(into: &mut Vec<MemoryError>, from: impl IntoIterator<Item = MemoryError>) {
    for e in from {
        if !into.iter().any(|x| x.key() == e.key()) {
            into.push(e);
        }
    }
    into.sort();
}

/// One concrete input for a `newSymbolic` statement, in execution order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplayInput {
    pub stmt: StmtId,
    pub location: String,
    pub symbol: u32,
    pub value: i64,
}

/// Where each abstract object lives: `(ao, x)` is `(target.obj, x + target.offset)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Resolution {
    pub mapping: BTreeMap<ObjectRef, AddressExpr>,
    /// Set when the unifications force two distinct concrete locations to
    /// be equal.
    pub contradiction: Option<String>,
}

/// Result of one forward pass.
#[derive(Clone, Debug)]
pub struct PassOutcome {
    /// Constraints fully expressed over symbols, in history order.
    pub constraints: Vec<Expr>,
    /// Constraints that still read unknown memory.
    pub unresolved: usize,
    /// False when the path is already known to be infeasible.
    pub consistent: bool,
}

/// Unification pairs with the history index whose reads their offsets use.
fn indexed_pairs(b: &BackwardState, terminated: bool) -> Vec<(usize, UnifPair)> {
    let mut out: Vec<(usize, UnifPair)> =
        b.history.iter().enumerate().filter_map(|(i, se)| se.u.clone().map(|u| (i, u))).collect();
    if terminated {
        // memory is zero at program start and at allocation, so whatever a
        // still-open pointer location refers to is NULL
        let end = b.history.len();
        for t in b.phi.values() {
            out.push((end, UnifPair::new(t.clone(), AddressExpr::null())));
        }
    }
    out
}

fn resolve_pairs(pairs: &[UnifPair]) -> Resolution {
    let mut res = Resolution::default();
    for u in transitive_closure(pairs) {
        let (l, r) = (&u.left, &u.right);
        match (l.obj.is_abstract(), r.obj.is_abstract()) {
            (true, false) => bind(&mut res, l, r),
            (false, true) => bind(&mut res, r, l),
            (false, false) => {
                let diff = Expr::sub(l.offset.clone(), r.offset.clone()).simplify();
                let clash = if l.obj != r.obj {
                    true
                } else {
                    matches!(diff.as_const(), Some(d) if d != 0)
                };
                if clash && res.contradiction.is_none() {
                    let names = crate::expr::DefaultNames;
                    res.contradiction = Some(u.render(&names));
                }
            }
            (true, true) => {}
        }
    }
    res
}

fn bind(res: &mut Resolution, ao: &AddressExpr, o: &AddressExpr) {
    res.mapping.entry(ao.obj).or_insert_with(|| {
        AddressExpr::new(o.obj, Expr::sub(o.offset.clone(), ao.offset.clone()).simplify())
    });
}

/// Map every abstract object that the unifications tie to a concrete one.
pub fn resolve_objects(b: &BackwardState, terminated: bool) -> Resolution {
    let pairs: Vec<UnifPair> = indexed_pairs(b, terminated).into_iter().map(|(_, u)| u).collect();
    resolve_pairs(&pairs)
}

fn rebase_expr(map: &BTreeMap<ObjectRef, AddressExpr>, e: &Expr) -> Expr {
    let objs = e.objects();
    let mut out = e.clone();
    for o in objs {
        if let Some(t) = map.get(&o) {
            out = out.replace_object(o, t.obj, &t.offset);
        }
    }
    out.simplify()
}

fn rebase_addr(map: &BTreeMap<ObjectRef, AddressExpr>, a: &AddressExpr) -> AddressExpr {
    let offset = rebase_expr(map, &a.offset);
    match map.get(&a.obj) {
        Some(t) => AddressExpr::new(t.obj, Expr::add(offset, t.offset.clone()).simplify()),
        None => AddressExpr::new(a.obj, offset),
    }
}

#[derive(Clone, Debug)]
struct Store {
    dest: AddressExpr,
    value: Expr,
    width: u64,
}

/// A backward path viewed in forward order with abstract objects rebased.
pub struct PathView<'a> {
    p: &'a Program,
    b: &'a BackwardState,
    terminated: bool,
    pub resolution: Resolution,
    stores: Vec<Option<Store>>,
    memo: HashMap<(usize, Expr), Option<Expr>>,
}

impl<'a> PathView<'a> {
    pub fn new(p: &'a Program, b: &'a BackwardState, terminated: bool) -> PathView<'a> {
        let pairs = indexed_pairs(b, terminated);
        let mut view = PathView {
            p,
            b,
            terminated,
            resolution: Resolution::default(),
            stores: Vec::new(),
            memo: HashMap::new(),
        };
        // offsets inside unifications may read memory; resolve them with
        // the current mapping until the mapping settles
        let mut current: Vec<UnifPair> = pairs.iter().map(|(_, u)| u.clone()).collect();
        for _ in 0..4 {
            let res = resolve_pairs(&current);
            let changed = res.mapping != view.resolution.mapping || view.stores.is_empty();
            view.set_resolution(res);
            if !changed {
                break;
            }
            let mut next = Vec::with_capacity(pairs.len());
            for (i, u) in &pairs {
                let fix = |v: &mut PathView, a: &AddressExpr| {
                    let off = rebase_expr(&v.resolution.mapping, &a.offset);
                    let off = v.resolve(&off, *i).unwrap_or(a.offset.clone());
                    AddressExpr::new(a.obj, off)
                };
                let l = fix(&mut view, &u.left);
                let r = fix(&mut view, &u.right);
                next.push(UnifPair::new(l, r));
            }
            if next == current {
                break;
            }
            current = next;
        }
        view
    }

    fn set_resolution(&mut self, res: Resolution) {
        let map = &res.mapping;
        self.stores = self
            .b
            .history
            .iter()
            .map(|se| {
                se.w.as_ref().map(|w| Store {
                    dest: rebase_addr(map, &w.dest),
                    value: rebase_expr(map, &w.value),
                    width: w.width,
                })
            })
            .collect();
        self.resolution = res;
        self.memo.clear();
    }

    fn map(&self) -> &BTreeMap<ObjectRef, AddressExpr> {
        &self.resolution.mapping
    }

    pub fn len(&self) -> usize {
        self.b.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.history.is_empty()
    }

    /// Replace every memory read in a rebased expression by the value it
    /// observes at history index `at`.
    pub fn resolve(&mut self, e: &Expr, at: usize) -> Option<Expr> {
        match e.kind() {
            ExprKind::Read { obj, offset, width } => {
                let key = (at, e.clone());
                if let Some(v) = self.memo.get(&key) {
                    return v.clone();
                }
                let v = match self.resolve(offset, at) {
                    Some(off) => self.read_value(*obj, &off, u64::from(*width), at),
                    None => None,
                };
                self.memo.insert(key, v.clone());
                v
            }
            _ if !e.has_reads() => Some(e.clone()),
            _ => {
                let mut ok = true;
                let r = e.map_children(|c| match self.resolve(c, at) {
                    Some(x) => x,
                    None => {
                        ok = false;
                        c.clone()
                    }
                });
                ok.then(|| r.simplify())
            }
        }
    }

    fn read_value(&mut self, obj: ObjectRef, off: &Expr, width: u64, at: usize) -> Option<Expr> {
        if matches!(obj, ObjectRef::Null | ObjectRef::Abstract(_)) {
            return None;
        }
        let w = width as usize;
        let mut bytes = ByteStore::new(w);
        let filled = |s: &ByteStore| (0..w).all(|k| s.is_written(k));
        let birth = self.b.objects.get(&obj).and_then(|i| i.birth_index);
        for j in at + 1..self.b.history.len() {
            if birth == Some(j) {
                return Some(bytes.read(0, w));
            }
            let Some(st) = self.stores[j].clone() else { continue };
            if st.dest.obj.is_abstract() {
                return None;
            }
            if st.dest.obj != obj {
                continue;
            }
            let dest_off = self.resolve(&st.dest.offset, j)?;
            let d = if dest_off == *off {
                0
            } else {
                Expr::sub(dest_off, off.clone()).simplify().as_const()?
            };
            let lo = d.max(0);
            let hi = (d + st.width as i64).min(width as i64);
            if lo >= hi {
                continue;
            }
            let value = self.resolve(&st.value, j)?;
            for k in lo..hi {
                if !bytes.is_written(k as usize) {
                    bytes.write_part(k as usize, &value, (k - d) as usize, 1);
                }
            }
            if filled(&bytes) {
                return Some(bytes.read(0, w));
            }
        }
        if birth.is_some() {
            return Some(bytes.read(0, w));
        }
        if !self.terminated {
            return None;
        }
        if let ObjectRef::Global(g) = obj {
            if let Some(init) = self.p.globals[g as usize].init {
                let size = self.p.size_of(&self.p.globals[g as usize].ty) as i64;
                let off = off.as_const()?;
                let value = Expr::constant(init);
                for k in 0..w as i64 {
                    let pos = off + k;
                    if (0..size.min(8)).contains(&pos) && !bytes.is_written(k as usize) {
                        bytes.write_part(k as usize, &value, pos as usize, 1);
                    }
                }
            }
        }
        Some(bytes.read(0, w))
    }

    /// Branch constraints in history order.
    pub fn constraints(&mut self) -> PassOutcome {
        let mut constraints = Vec::new();
        let mut unresolved = 0;
        let mut consistent = self.resolution.contradiction.is_none();
        for i in 0..self.b.history.len() {
            let c = &self.b.history[i].c;
            if c.is_true() {
                continue;
            }
            let c = rebase_expr(self.map(), c);
            match self.resolve(&c, i) {
                Some(r) => {
                    if r.is_false() {
                        consistent = false;
                    }
                    if !r.is_true() {
                        constraints.push(r);
                    }
                }
                None => unresolved += 1,
            }
        }
        PassOutcome { constraints, unresolved, consistent }
    }

    /// Branch conditions with reads replaced by their values but otherwise
    /// left unfolded, for display. `None` marks an unresolved condition.
    pub fn shown_constraints(&mut self) -> Vec<(StmtId, Option<Expr>)> {
        let mut out = Vec::new();
        for i in 0..self.b.history.len() {
            let c = self.b.history[i].c.clone();
            if c.is_true() {
                continue;
            }
            let mut e = c;
            for (o, t) in self.resolution.mapping.clone() {
                e = e.replace_object(o, t.obj, &t.offset);
            }
            out.push((self.b.history[i].stmt, self.substitute_reads(&e, i)));
        }
        out
    }

    fn substitute_reads(&mut self, e: &Expr, at: usize) -> Option<Expr> {
        if let ExprKind::Read { offset, .. } = e.kind() {
            let fixed = Expr::new(match e.kind() {
                ExprKind::Read { obj, width, .. } => {
                    ExprKind::Read { obj: *obj, offset: offset.simplify(), width: *width }
                }
                _ => unreachable!(),
            });
            return self.resolve(&fixed, at);
        }
        let mut ok = true;
        let r = e.map_children(|c| match self.substitute_reads(c, at) {
            Some(x) => x,
            None => {
                ok = false;
                c.clone()
            }
        });
        ok.then_some(r)
    }

    fn eval_offset(&mut self, a: &AddressExpr, at: usize, model: &BTreeMap<u32, i64>) -> Option<i64> {
        let off = self.resolve(&a.offset, at)?;
        off.eval(model).ok()
    }

    fn freed_before(&self, obj: ObjectRef, i: usize) -> Option<usize> {
        self.b
            .free_events
            .iter()
            .filter(|(j, _)| *j > i)
            .find(|(_, t)| rebase_addr(self.map(), t).obj == obj)
            .map(|(j, _)| *j)
    }

    /// Memory errors on this path under a satisfying assignment.
    pub fn errors(&mut self, model: &BTreeMap<u32, i64>) -> Vec<MemoryError> {
        let names: &dyn ObjectNames = self.p;
        let n = self.b.history.len();
        let fwd = |i: usize| n - 1 - i;
        let mut out = BTreeSet::new();
        for i in 0..n {
            let accesses = self.b.history[i].accesses.clone();
            let stmt = self.b.history[i].stmt;
            let err = |kind, object: ObjectRef, steps: Vec<usize>, detail: String| MemoryError {
                kind,
                stmt,
                location: self.p.location(stmt),
                detail,
                object: names.object_name(object),
                steps,
            };
            for acc in accesses {
                let a = rebase_addr(self.map(), &acc.addr);
                let verb = match acc.kind {
                    AccessKind::Read => "read",
                    AccessKind::Write => "write",
                };
                match a.obj {
                    ObjectRef::Null => {
                        let detail = format!("{verb} of {} bytes through NULL", acc.width);
                        out.insert(err(ErrorKind::NullDereference, a.obj, vec![fwd(i)], detail));
                        continue;
                    }
                    ObjectRef::Abstract(_) => continue,
                    _ => {}
                }
                let size = self.b.size_of(a.obj).unwrap_or(0) as i64;
                if let Some(off) = self.eval_offset(&a, i, model) {
                    if off < 0 || off + acc.width as i64 > size {
                        let detail = format!(
                            "{verb} of {} bytes at offset {off} of {} ({size} bytes)",
                            acc.width,
                            names.object_name(a.obj)
                        );
                        out.insert(err(ErrorKind::OutOfBounds, a.obj, vec![fwd(i)], detail));
                    }
                }
                if a.obj.is_heap() {
                    if let Some(j) = self.freed_before(a.obj, i) {
                        let detail = format!("{verb} of freed {}", names.object_name(a.obj));
                        out.insert(err(ErrorKind::UseAfterFree, a.obj, vec![fwd(j), fwd(i)], detail));
                    }
                }
            }
        }
        for (i, t) in self.b.free_events.clone() {
            let a = rebase_addr(self.map(), &t);
            let stmt = self.b.history[i].stmt;
            let name = names.object_name(a.obj);
            let err = |kind, steps: Vec<usize>, detail: String| MemoryError {
                kind,
                stmt,
                location: self.p.location(stmt),
                detail,
                object: name.clone(),
                steps,
            };
            match a.obj {
                ObjectRef::Null => {
                    out.insert(err(ErrorKind::InvalidFree, vec![fwd(i)], "free of NULL".into()));
                }
                ObjectRef::Global(_) => {
                    out.insert(err(ErrorKind::InvalidFree, vec![fwd(i)], format!("free of global {name}")));
                }
                ObjectRef::Abstract(_) => {}
                ObjectRef::Heap(_) => {
                    if let Some(j) = self.freed_before(a.obj, i) {
                        out.insert(err(ErrorKind::DoubleFree, vec![fwd(j), fwd(i)], format!("{name} freed twice")));
                    } else if let Some(off) = self.eval_offset(&a, i, model) {
                        if off != 0 {
                            let detail = format!("free of {name} at offset {off}");
                            out.insert(err(ErrorKind::InvalidFree, vec![fwd(i)], detail));
                        }
                    }
                }
            }
        }
        out.extend(self.leaks(model));
        out.into_iter().collect()
    }

    /// Heap objects that are live but unreachable from globals right before
    /// the target statement runs.
    fn leaks(&mut self, model: &BTreeMap<u32, i64>) -> Vec<MemoryError> {
        let n = self.b.history.len();
        if !self.terminated || n < 2 {
            return Vec::new();
        }
        let mut mem: BTreeMap<(ObjectRef, i64), i64> = BTreeMap::new();
        for j in (1..n).rev() {
            let Some(st) = self.stores[j].clone() else { continue };
            let Some(off) = self.eval_offset(&st.dest, j, model) else { continue };
            let value = self.resolve(&st.value, j).and_then(|v| v.eval(model).ok());
            let lo = off - 7;
            let hi = off + st.width as i64;
            let stale: Vec<_> = mem.range((st.dest.obj, lo)..(st.dest.obj, hi)).map(|(k, _)| *k).collect();
            for k in stale {
                mem.remove(&k);
            }
            if let (8, Some(v)) = (st.width, value) {
                mem.insert((st.dest.obj, off), v);
            }
        }
        let freed: BTreeSet<ObjectRef> = self
            .b
            .free_events
            .iter()
            .filter(|(j, _)| *j >= 1)
            .map(|(_, t)| rebase_addr(self.map(), t).obj)
            .collect();
        let mut seen: BTreeSet<ObjectRef> = BTreeSet::new();
        let mut queue: VecDeque<ObjectRef> =
            (0..self.p.globals.len()).map(|g| ObjectRef::Global(g as u32)).collect();
        while let Some(o) = queue.pop_front() {
            if !seen.insert(o) {
                continue;
            }
            for ((_, _), v) in mem.range((o, i64::MIN)..=(o, i64::MAX)) {
                let (to, _) = object_at(*v);
                if to.is_heap() && !seen.contains(&to) {
                    queue.push_back(to);
                }
            }
        }
        let names: &dyn ObjectNames = self.p;
        let mut out = Vec::new();
        for (o, info) in &self.b.objects {
            let Some(bi) = info.birth_index else { continue };
            if !o.is_heap() || bi == 0 || freed.contains(o) || seen.contains(o) {
                continue;
            }
            let stmt = info.birth.unwrap_or(self.b.history[bi].stmt);
            out.push(MemoryError {
                kind: ErrorKind::MemoryLeak,
                stmt,
                location: self.p.location(stmt),
                detail: format!("{} ({} bytes) is unreachable", names.object_name(*o), info.size),
                object: names.object_name(*o),
                steps: vec![n - 1 - bi],
            });
        }
        out
    }

    /// Concrete inputs for every `newSymbolic` on the path, first executed
    /// first.
    pub fn replay(&self, model: &BTreeMap<u32, i64>) -> Vec<ReplayInput> {
        let mut out = Vec::new();
        for se in self.b.history.iter().rev() {
            if !matches!(self.p.node(se.stmt).kind, NodeKind::AssignSymbolic { .. }) {
                continue;
            }
            let Some(w) = &se.w else { continue };
            if let ExprKind::Sym { id, .. } = w.value.kind() {
                out.push(ReplayInput {
                    stmt: se.stmt,
                    location: self.p.location(se.stmt),
                    symbol: *id,
                    value: model.get(id).copied().unwrap_or(0),
                });
            }
        }
        out
    }
}

/// Resolve a path and collect its constraints.
pub fn forward_pass(p: &Program, b: &BackwardState, terminated: bool) -> PassOutcome {
    PathView::new(p, b, terminated).constraints()
}

/// Every symbol created on the path, defaulting unconstrained ones to 0.
pub fn complete_model(b: &BackwardState, model: &BTreeMap<u32, i64>) -> BTreeMap<u32, i64> {
    b.symbols.keys().map(|id| (*id, model.get(id).copied().unwrap_or(0))).collect()
}
