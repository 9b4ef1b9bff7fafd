//! Backward execution state: objects, points-to map, unification pairs,
//! execution history and byte-level stores.

use std::collections::BTreeMap;

use crate::expr::{AddressExpr, BinaryOp, Expr, ObjectNames, ObjectRef};
use crate::lang::{Program, StmtId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectInfo {
    pub size: u64,
    /// Statement that created the object (malloc for heap objects, the
    /// materializing statement for abstract ones).
    pub birth: Option<StmtId>,
    /// History index of the malloc that created a heap object.
    pub birth_index: Option<usize>,
}

/// Two locations that denote the same storage.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnifPair {
    pub left: AddressExpr,
    pub right: AddressExpr,
}

impl UnifPair {
    pub fn new(left: AddressExpr, right: AddressExpr) -> UnifPair {
        UnifPair { left, right }
    }

    pub fn flipped(&self) -> UnifPair {
        UnifPair { left: self.right.clone(), right: self.left.clone() }
    }

    /// Equal up to orientation.
    pub fn same(&self, other: &UnifPair) -> bool {
        self == other || (self.left == other.right && self.right == other.left)
    }

    pub fn render(&self, names: &dyn ObjectNames) -> String {
        format!("({},{})", self.left.render(names), self.right.render(names))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreTuple {
    pub dest: AddressExpr,
    pub value: Expr,
    pub width: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AccessKind {
    Read,
    Write,
}

/// One memory access performed by a statement, kept for error checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Access {
    pub kind: AccessKind,
    pub addr: AddressExpr,
    pub width: u64,
}

/// Pointer rule applied while executing a statement backward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    /// Assignment with both sides unmapped.
    S1,
    /// Assignment, lhs mapped, rhs materialized.
    S2,
    /// Assignment, lhs unmapped, rhs mapped.
    S3,
    /// Assignment, both sides mapped.
    S4,
    /// Malloc into an unmapped lhs.
    S5,
    /// Malloc into a mapped lhs.
    S6,
    /// Free of an unmapped pointer.
    S7,
    /// Free of a mapped pointer.
    S8,
}

impl Rule {
    pub fn unifies(self) -> bool {
        matches!(self, Rule::S2 | Rule::S4 | Rule::S6)
    }
}

/// Side effect of one backward-executed statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SideEffect {
    pub stmt: StmtId,
    pub u: Option<UnifPair>,
    pub w: Option<StoreTuple>,
    pub c: Expr,
    pub free: Option<AddressExpr>,
    pub accesses: Vec<Access>,
    pub rule: Option<Rule>,
}

impl SideEffect {
    pub fn empty(stmt: StmtId) -> SideEffect {
        SideEffect {
            stmt,
            u: None,
            w: None,
            c: Expr::truth(),
            free: None,
            accesses: Vec::new(),
            rule: None,
        }
    }
}

/// One row of the step table dumped for traces.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub what: String,
    pub globals: Vec<String>,
    pub abstracts: Vec<String>,
    pub heap: Vec<String>,
    pub phi: Vec<String>,
    pub effect: String,
    pub unif: Vec<String>,
}

/// Labels handed out to displayed side effects (`c1`, `w1`, `u1`, ...).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceLog {
    pub rows: Vec<TraceRow>,
    pub next_c: u32,
    pub next_w: u32,
    pub next_u: u32,
    /// Label of each base unification pair, in `unif` order.
    pub unif_labels: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct BackwardState {
    pub objects: BTreeMap<ObjectRef, ObjectInfo>,
    /// Symbol id to the `newSymbolic` statement creating it.
    pub symbols: BTreeMap<u32, StmtId>,
    pub phi: BTreeMap<(ObjectRef, Expr), AddressExpr>,
    pub unif: Vec<UnifPair>,
    pub history: Vec<SideEffect>,
    pub pc: StmtId,
    pub edge_counts: BTreeMap<(StmtId, StmtId), u32>,
    /// (history index, freed address)
    pub free_events: Vec<(usize, AddressExpr)>,
    /// Statements executed since the last forward pass.
    pub since_pass: u32,
    next_abstract: u32,
    next_heap: u32,
    next_sym: u32,
    pub trace: Option<TraceLog>,
}

impl BackwardState {
    /// Fresh state positioned at `target` with all globals allocated.
    pub fn initial(p: &Program, target: StmtId, trace: bool) -> BackwardState {
        let mut objects = BTreeMap::new();
        for (i, g) in p.globals.iter().enumerate() {
            objects.insert(
                ObjectRef::Global(i as u32),
                ObjectInfo { size: p.size_of(&g.ty), birth: None, birth_index: None },
            );
        }
        BackwardState {
            objects,
            symbols: BTreeMap::new(),
            phi: BTreeMap::new(),
            unif: Vec::new(),
            history: Vec::new(),
            pc: target,
            edge_counts: BTreeMap::new(),
            free_events: Vec::new(),
            since_pass: 0,
            next_abstract: 1,
            next_heap: 1,
            next_sym: 1,
            trace: trace.then(TraceLog::default),
        }
    }

    pub fn size_of(&self, o: ObjectRef) -> Option<u64> {
        self.objects.get(&o).map(|i| i.size)
    }

    /// Φ lookup. The NULL location maps to itself.
    pub fn phi_lookup(&self, ae: &AddressExpr) -> Option<AddressExpr> {
        if ae.obj == ObjectRef::Null {
            return Some(AddressExpr::null());
        }
        self.phi.get(&(ae.obj, ae.offset.simplify())).cloned()
    }

    /// Set or clear (`None`) the target of a pointer location.
    pub fn phi_update(&mut self, ae: &AddressExpr, target: Option<AddressExpr>) {
        let key = (ae.obj, ae.offset.simplify());
        match target {
            Some(t) => {
                self.phi.insert(key, t);
            }
            None => {
                self.phi.remove(&key);
            }
        }
    }

    pub fn new_object(&mut self, abstract_: bool, size: u64, birth: StmtId) -> ObjectRef {
        let o = if abstract_ {
            self.next_abstract += 1;
            ObjectRef::Abstract(self.next_abstract - 1)
        } else {
            self.next_heap += 1;
            ObjectRef::Heap(self.next_heap - 1)
        };
        let birth_index = (!abstract_).then_some(self.history.len());
        self.objects.insert(o, ObjectInfo { size, birth: Some(birth), birth_index });
        o
    }

    /// Abstract objects grow to cover every access seen on them.
    pub fn grow(&mut self, o: ObjectRef, min_size: u64) {
        if o.is_abstract() {
            if let Some(info) = self.objects.get_mut(&o) {
                info.size = info.size.max(min_size);
            }
        }
    }

    pub fn new_symbol(&mut self, origin: StmtId, width: u8) -> Expr {
        let id = self.next_sym;
        self.next_sym += 1;
        self.symbols.insert(id, origin);
        Expr::sym(id, width, origin)
    }

    pub fn add_unification(&mut self, u: UnifPair) {
        if !self.unif.iter().any(|x| x.same(&u)) {
            self.unif.push(u);
        }
    }

    pub fn objects_of_kind(&self, pred: impl Fn(ObjectRef) -> bool) -> Vec<ObjectRef> {
        self.objects.keys().copied().filter(|o| pred(*o)).collect()
    }

    pub fn is_terminated(&self, entry: StmtId) -> bool {
        !self.history.is_empty() && self.pc == entry
    }
}

/// Derive every pair implied by chaining through a shared object.
///
/// Offsets may be symbolic; the constant case picks the form that keeps
/// offsets non-negative.
pub fn transitive_closure(pairs: &[UnifPair]) -> Vec<UnifPair> {
    const CAP: usize = 512;
    let mut out: Vec<UnifPair> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    // inputs are kept verbatim; only derived pairs are folded by shift
    for p in pairs {
        if !out.iter().any(|x| x.same(p)) {
            seen.insert(closure_key(p));
            out.push(p.clone());
        }
    }
    let mut push = |p: UnifPair, out: &mut Vec<UnifPair>| {
        if seen.insert(closure_key(&p)) {
            out.push(p);
        }
    };
    let mut i = 0;
    while i < out.len() && out.len() < CAP {
        for j in 0..i {
            let (a, b) = (out[i].clone(), out[j].clone());
            for x in [a.clone(), a.flipped()] {
                for y in [b.clone(), b.flipped()] {
                    if x.right.obj != y.right.obj || x.left.obj == y.left.obj {
                        continue;
                    }
                    push(chain(&x, &y), &mut out);
                }
            }
        }
        i += 1;
    }
    out
}

/// Pairs relating the same two objects by the same constant shift are
/// interchangeable.
fn closure_key(p: &UnifPair) -> (ObjectRef, ObjectRef, Result<i64, (Expr, Expr)>) {
    let (l, r) = if p.left.obj <= p.right.obj { (&p.left, &p.right) } else { (&p.right, &p.left) };
    let shift = match (l.offset.as_const(), r.offset.as_const()) {
        (Some(a), Some(b)) => Ok(b.wrapping_sub(a)),
        _ => Err((l.offset.clone(), r.offset.clone())),
    };
    (l.obj, r.obj, shift)
}

/// ((o1,f1),(o2,f2)) and ((o3,f3),(o2,f4)) give ((o1,f5),(o3,f6)).
fn chain(x: &UnifPair, y: &UnifPair) -> UnifPair {
    let (f1, f2) = (&x.left.offset, &x.right.offset);
    let (f3, f4) = (&y.left.offset, &y.right.offset);
    let lower = |a: &Expr, b: &Expr, c: &Expr| Expr::sub(a.clone(), Expr::sub(b.clone(), c.clone())).simplify();
    let (f5, f6) = match (f2.as_const(), f4.as_const()) {
        (Some(c2), Some(c4)) if c4 < c2 => (lower(f1, f2, f4), f3.clone()),
        _ => (f1.clone(), lower(f3, f4, f2)),
    };
    UnifPair::new(AddressExpr::new(x.left.obj, f5), AddressExpr::new(y.left.obj, f6))
}

/// Byte-addressed scratch store. Each cell remembers which byte of which
/// value it holds; unwritten cells read as zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ByteStore {
    cells: Vec<Option<(Expr, u8)>>,
}

impl ByteStore {
    pub fn new(size: usize) -> ByteStore {
        ByteStore { cells: vec![None; size] }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_written(&self, i: usize) -> bool {
        matches!(self.cells.get(i), Some(Some(_)))
    }

    /// Store the low `width` bytes of `v` at `[lo, lo+width)`.
    pub fn write(&mut self, lo: usize, width: usize, v: &Expr) {
        if self.cells.len() < lo + width {
            self.cells.resize(lo + width, None);
        }
        for k in 0..width {
            self.cells[lo + k] = Some((v.clone(), k as u8));
        }
    }

    /// Store bytes `[from, from+len)` of `v` at `lo`.
    pub fn write_part(&mut self, lo: usize, v: &Expr, from: usize, len: usize) {
        if self.cells.len() < lo + len {
            self.cells.resize(lo + len, None);
        }
        for k in 0..len {
            self.cells[lo + k] = Some((v.clone(), (from + k) as u8));
        }
    }

    /// Read `width` bytes at `lo` as a sign-extended value.
    pub fn read(&self, lo: usize, width: usize) -> Expr {
        let cell = |i: usize| self.cells.get(i).cloned().flatten();
        // whole value in place
        if let Some((v, 0)) = cell(lo) {
            let whole = (1..width).all(|k| matches!(cell(lo + k), Some((ref x, b)) if *x == v && b as usize == k));
            if whole {
                return if width >= 8 { v } else { Expr::sign_ext(v, width as u8).simplify() };
            }
        }
        // stitch runs of consecutive bytes taken from the same value
        let mut acc: Option<Expr> = None;
        let mut k = 0;
        while k < width {
            let start = k;
            let run = cell(lo + k);
            k += 1;
            if let Some((ref v, b0)) = run {
                while k < width {
                    match cell(lo + k) {
                        Some((ref x, b)) if x == v && b as usize == b0 as usize + (k - start) => k += 1,
                        _ => break,
                    }
                }
            } else {
                while k < width && cell(lo + k).is_none() {
                    k += 1;
                }
                continue;
            }
            let (v, b0) = run.unwrap();
            let len = k - start;
            let mut piece = v;
            if b0 > 0 {
                piece = Expr::binary(BinaryOp::LShr, piece, Expr::constant(8 * i64::from(b0)));
            }
            if len < 8 {
                piece = Expr::binary(BinaryOp::BitAnd, piece, Expr::constant(((1i128 << (8 * len)) - 1) as i64));
            }
            if start > 0 {
                piece = Expr::binary(BinaryOp::Shl, piece, Expr::constant(8 * start as i64));
            }
            acc = Some(match acc {
                None => piece,
                Some(a) => Expr::binary(BinaryOp::BitOr, a, piece),
            });
        }
        let v = acc.unwrap_or_else(|| Expr::constant(0));
        let v = if width >= 8 { v } else { Expr::sign_ext(v, width as u8) };
        v.simplify()
    }
}
