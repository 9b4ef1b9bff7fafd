//! Constraint solving over 64-bit integer symbols.
//!
//! Interval propagation (forward evaluation plus backward narrowing) prunes
//! the domains, then a depth-first search splits the smallest domain until
//! every symbol is fixed. A model is only reported after concrete
//! evaluation confirms every constraint.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::time::{Duration, Instant};

use crate::expr::{apply_binary, base_address, BinaryOp, Expr, ExprKind, UnaryOp};

pub type Model = BTreeMap<u32, i64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct SolverStats {
    pub queries: u64,
    pub sat: u64,
    pub unsat: u64,
    pub unknown: u64,
    pub time_ms: u64,
}

#[derive(Clone, Debug)]
pub struct Solver {
    pub timeout: Duration,
    pub stats: SolverStats,
}

impl Default for Solver {
    fn default() -> Solver {
        Solver::new(Duration::from_secs(5))
    }
}

impl Solver {
    pub fn new(timeout: Duration) -> Solver {
        Solver { timeout, stats: SolverStats::default() }
    }

    pub fn check(&mut self, constraints: &[Expr]) -> SatResult {
        let start = Instant::now();
        let r = solve(constraints, self.timeout);
        self.stats.queries += 1;
        match r {
            SatResult::Sat(_) => self.stats.sat += 1,
            SatResult::Unsat => self.stats.unsat += 1,
            SatResult::Unknown => self.stats.unknown += 1,
        }
        self.stats.time_ms += start.elapsed().as_millis() as u64;
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Iv {
    lo: i128,
    hi: i128,
}

const MIN: i128 = i64::MIN as i128;
const MAX: i128 = i64::MAX as i128;
const FULL: Iv = Iv { lo: MIN, hi: MAX };
const BOOL: Iv = Iv { lo: 0, hi: 1 };

impl Iv {
    fn point(v: i128) -> Iv {
        Iv { lo: v, hi: v }
    }

    fn new(lo: i128, hi: i128) -> Iv {
        Iv { lo, hi }
    }

    fn is_empty(self) -> bool {
        self.lo > self.hi
    }

    fn meet(self, o: Iv) -> Iv {
        Iv { lo: self.lo.max(o.lo), hi: self.hi.min(o.hi) }
    }

    fn is_point(self) -> bool {
        self.lo == self.hi
    }

    fn contains(self, v: i128) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Result of an arithmetic operation: exact when it stays in range,
    /// otherwise the value may wrap anywhere.
    fn fit(self) -> (Iv, bool) {
        if self.lo < MIN || self.hi > MAX {
            (FULL, false)
        } else {
            (self, true)
        }
    }

    fn width(self) -> u128 {
        (self.hi - self.lo) as u128
    }
}

fn sym_range(width: u8) -> Iv {
    if width >= 8 {
        FULL
    } else {
        let half = 1i128 << (8 * u32::from(width) - 1);
        Iv::new(-half, half - 1)
    }
}

type Dom = BTreeMap<u32, Iv>;

/// Forward interval of an expression. The flag is false when the interval
/// was widened on wrap-around; such nodes are not narrowed backward.
fn fwd(e: &Expr, dom: &Dom) -> (Iv, bool) {
    match e.kind() {
        ExprKind::Const(v) => (Iv::point(*v as i128), true),
        ExprKind::Sym { id, width, .. } => (dom.get(id).copied().unwrap_or(sym_range(*width)), true),
        ExprKind::Read { .. } => (FULL, false),
        ExprKind::AddrOf { obj, offset } => match base_address(*obj) {
            Some(b) => {
                let (o, ok) = fwd(offset, dom);
                let (r, fits) = Iv::new(o.lo + b as i128, o.hi + b as i128).fit();
                (r, ok && fits)
            }
            None => (FULL, false),
        },
        ExprKind::SignExt(a, n) => {
            let (x, ok) = fwd(a, dom);
            let r = sym_range(*n);
            if r.lo <= x.lo && x.hi <= r.hi {
                (x, ok)
            } else {
                (r, false)
            }
        }
        ExprKind::Unary(UnaryOp::Neg, a) => {
            let (x, ok) = fwd(a, dom);
            let (r, fits) = Iv::new(-x.hi, -x.lo).fit();
            (r, ok && fits)
        }
        ExprKind::Unary(UnaryOp::Not, a) => {
            let (x, _) = fwd(a, dom);
            (truth_of_not(x), true)
        }
        ExprKind::Binary(op, l, r) => {
            let (a, okl) = fwd(l, dom);
            let (b, okr) = fwd(r, dom);
            let ok = okl && okr;
            match op {
                BinaryOp::Add => {
                    let (r, f) = Iv::new(a.lo + b.lo, a.hi + b.hi).fit();
                    (r, ok && f)
                }
                BinaryOp::Sub => {
                    let (r, f) = Iv::new(a.lo - b.hi, a.hi - b.lo).fit();
                    (r, ok && f)
                }
                BinaryOp::Mul => {
                    let c = [a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi];
                    let (r, f) = Iv::new(*c.iter().min().unwrap(), *c.iter().max().unwrap()).fit();
                    (r, ok && f)
                }
                BinaryOp::Div => (div_iv(a, b), false),
                BinaryOp::Rem => (rem_iv(a, b), false),
                BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                    (compare_iv(*op, a, b), true)
                }
                BinaryOp::LAnd => {
                    let (ta, tb) = (truth(a), truth(b));
                    let r = if ta == Some(false) || tb == Some(false) {
                        Iv::point(0)
                    } else if ta == Some(true) && tb == Some(true) {
                        Iv::point(1)
                    } else {
                        BOOL
                    };
                    (r, true)
                }
                BinaryOp::LOr => {
                    let (ta, tb) = (truth(a), truth(b));
                    let r = if ta == Some(true) || tb == Some(true) {
                        Iv::point(1)
                    } else if ta == Some(false) && tb == Some(false) {
                        Iv::point(0)
                    } else {
                        BOOL
                    };
                    (r, true)
                }
                BinaryOp::BitAnd if a.lo >= 0 || b.lo >= 0 => {
                    let hi = if a.lo >= 0 && b.lo >= 0 { a.hi.min(b.hi) } else if a.lo >= 0 { a.hi } else { b.hi };
                    (Iv::new(0, hi), false)
                }
                BinaryOp::BitOr if a.lo >= 0 && b.lo >= 0 => {
                    let m = a.hi.max(b.hi) as u128;
                    let bound = if m == 0 { 0 } else { (u128::MAX >> m.leading_zeros()) as i128 };
                    (Iv::new(0, bound.min(MAX)), false)
                }
                BinaryOp::LShr if b.is_point() && a.lo >= 0 && (1..64).contains(&b.lo) => {
                    (Iv::new(a.lo >> b.lo, a.hi >> b.lo), false)
                }
                _ if a.is_point() && b.is_point() => match apply_binary(*op, a.lo as i64, b.lo as i64) {
                    Ok(v) => (Iv::point(v as i128), true),
                    Err(_) => (FULL, false),
                },
                _ => (FULL, false),
            }
        }
    }
}

fn truth(x: Iv) -> Option<bool> {
    if x == Iv::point(0) {
        Some(false)
    } else if !x.contains(0) {
        Some(true)
    } else {
        None
    }
}

fn truth_of_not(x: Iv) -> Iv {
    match truth(x) {
        Some(true) => Iv::point(0),
        Some(false) => Iv::point(1),
        None => BOOL,
    }
}

fn div_iv(a: Iv, b: Iv) -> Iv {
    if b.contains(0) {
        return FULL;
    }
    let q = |x: i128, y: i128| x / y;
    let c = [q(a.lo, b.lo), q(a.lo, b.hi), q(a.hi, b.lo), q(a.hi, b.hi)];
    Iv::new(*c.iter().min().unwrap(), *c.iter().max().unwrap()).fit().0
}

fn rem_iv(a: Iv, b: Iv) -> Iv {
    let m = b.lo.abs().max(b.hi.abs());
    if m == 0 {
        return FULL;
    }
    let bound = m - 1;
    if a.lo >= 0 {
        Iv::new(0, bound.min(a.hi))
    } else if a.hi <= 0 {
        Iv::new((-bound).max(a.lo), 0)
    } else {
        Iv::new((-bound).max(a.lo), bound.min(a.hi))
    }
}

fn compare_iv(op: BinaryOp, a: Iv, b: Iv) -> Iv {
    let always = |t: bool| if t { Iv::point(1) } else { Iv::point(0) };
    match op {
        BinaryOp::Eq if a.is_point() && b.is_point() => always(a.lo == b.lo),
        BinaryOp::Eq if a.meet(b).is_empty() => Iv::point(0),
        BinaryOp::Ne if a.is_point() && b.is_point() => always(a.lo != b.lo),
        BinaryOp::Ne if a.meet(b).is_empty() => Iv::point(1),
        BinaryOp::Lt if a.hi < b.lo => Iv::point(1),
        BinaryOp::Lt if a.lo >= b.hi => Iv::point(0),
        BinaryOp::Le if a.hi <= b.lo => Iv::point(1),
        BinaryOp::Le if a.lo > b.hi => Iv::point(0),
        BinaryOp::Gt => compare_iv(BinaryOp::Lt, b, a),
        BinaryOp::Ge => compare_iv(BinaryOp::Le, b, a),
        _ => BOOL,
    }
}

enum Narrow {
    Ok,
    Empty,
}

/// Shrink symbol domains so that `e` can take a value in `t`.
fn narrow(e: &Expr, t: Iv, dom: &mut Dom) -> Narrow {
    let (cur, exact) = fwd(e, dom);
    let t = t.meet(cur);
    if t.is_empty() {
        return Narrow::Empty;
    }
    if !exact && !is_boolean(e) {
        return Narrow::Ok;
    }
    match e.kind() {
        ExprKind::Sym { id, width, .. } => {
            let d = dom.entry(*id).or_insert(sym_range(*width));
            *d = d.meet(t);
            if d.is_empty() {
                return Narrow::Empty;
            }
            Narrow::Ok
        }
        ExprKind::AddrOf { obj, offset } => {
            let b = base_address(*obj).unwrap_or(0) as i128;
            narrow(offset, Iv::new(t.lo - b, t.hi - b), dom)
        }
        ExprKind::SignExt(a, _) => narrow(a, t, dom),
        ExprKind::Unary(UnaryOp::Neg, a) => narrow(a, Iv::new(-t.hi, -t.lo), dom),
        ExprKind::Unary(UnaryOp::Not, a) => match truth(t) {
            Some(true) => narrow(a, Iv::point(0), dom),
            Some(false) => narrow_nonzero(a, dom),
            None => Narrow::Ok,
        },
        ExprKind::Binary(op, l, r) => {
            let (a, _) = fwd(l, dom);
            let (b, _) = fwd(r, dom);
            match op {
                BinaryOp::Add => {
                    and(narrow(l, Iv::new(t.lo - b.hi, t.hi - b.lo), dom), || {
                        let (a, _) = fwd(l, dom);
                        narrow(r, Iv::new(t.lo - a.hi, t.hi - a.lo), dom)
                    })
                }
                BinaryOp::Sub => {
                    and(narrow(l, Iv::new(t.lo + b.lo, t.hi + b.hi), dom), || {
                        let (a, _) = fwd(l, dom);
                        narrow(r, Iv::new(a.lo - t.hi, a.hi - t.lo), dom)
                    })
                }
                BinaryOp::Mul if b.is_point() && b.lo != 0 => narrow(l, div_inward(t, b.lo), dom),
                BinaryOp::Mul if a.is_point() && a.lo != 0 => narrow(r, div_inward(t, a.lo), dom),
                BinaryOp::LAnd if truth(t) == Some(true) => {
                    and(narrow_nonzero(l, dom), || narrow_nonzero(r, dom))
                }
                BinaryOp::LOr if truth(t) == Some(false) => {
                    and(narrow(l, Iv::point(0), dom), || narrow(r, Iv::point(0), dom))
                }
                _ if op.is_relational() => match truth(t) {
                    Some(true) => narrow_relation(*op, l, r, dom),
                    Some(false) => narrow_relation(op.negated().expect("relational"), l, r, dom),
                    None => Narrow::Ok,
                },
                _ => Narrow::Ok,
            }
        }
        _ => Narrow::Ok,
    }
}

fn and(a: Narrow, b: impl FnOnce() -> Narrow) -> Narrow {
    match a {
        Narrow::Empty => Narrow::Empty,
        Narrow::Ok => b(),
    }
}

fn is_boolean(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Binary(op, ..) => op.is_relational() || matches!(op, BinaryOp::LAnd | BinaryOp::LOr),
        ExprKind::Unary(UnaryOp::Not, _) => true,
        _ => false,
    }
}

/// Values x with `x * k` in `t` (ignoring wrap-around, which the caller
/// has excluded).
fn div_inward(t: Iv, k: i128) -> Iv {
    let (lo, hi) = if k > 0 { (t.lo, t.hi) } else { (-t.hi, -t.lo) };
    let k = k.abs();
    Iv::new(lo.div_euclid(k) + i128::from(lo.rem_euclid(k) != 0), hi.div_euclid(k))
}

fn narrow_nonzero(e: &Expr, dom: &mut Dom) -> Narrow {
    let (cur, _) = fwd(e, dom);
    if cur == Iv::point(0) {
        return Narrow::Empty;
    }
    if is_boolean(e) {
        return narrow(e, Iv::point(1), dom);
    }
    if cur.lo == 0 {
        return narrow(e, Iv::new(1, cur.hi), dom);
    }
    if cur.hi == 0 {
        return narrow(e, Iv::new(cur.lo, -1), dom);
    }
    Narrow::Ok
}

fn narrow_relation(op: BinaryOp, l: &Expr, r: &Expr, dom: &mut Dom) -> Narrow {
    let (a, _) = fwd(l, dom);
    let (b, _) = fwd(r, dom);
    let (tl, tr) = match op {
        BinaryOp::Eq => (b, a),
        BinaryOp::Lt => (Iv::new(MIN, b.hi - 1), Iv::new(a.lo + 1, MAX)),
        BinaryOp::Le => (Iv::new(MIN, b.hi), Iv::new(a.lo, MAX)),
        BinaryOp::Gt => (Iv::new(b.lo + 1, MAX), Iv::new(MIN, a.hi - 1)),
        BinaryOp::Ge => (Iv::new(b.lo, MAX), Iv::new(MIN, a.hi)),
        BinaryOp::Ne => {
            if a.is_point() && b.is_point() && a.lo == b.lo {
                return Narrow::Empty;
            }
            let shave = |x: Iv, v: Iv| {
                if !v.is_point() {
                    x
                } else if x.lo == v.lo {
                    Iv::new(x.lo + 1, x.hi)
                } else if x.hi == v.lo {
                    Iv::new(x.lo, x.hi - 1)
                } else {
                    x
                }
            };
            (shave(a, b), shave(b, a))
        }
        _ => return Narrow::Ok,
    };
    and(narrow(l, tl, dom), || narrow(r, tr, dom))
}

fn propagate(cs: &[Expr], dom: &mut Dom) -> bool {
    for _ in 0..64 {
        let before = dom.clone();
        for c in cs {
            if let Narrow::Empty = narrow_nonzero(c, dom) {
                return false;
            }
            if truth(fwd(c, dom).0) == Some(false) {
                return false;
            }
        }
        if *dom == before {
            return true;
        }
    }
    // bounds still creeping: look for a cycle of strict orderings
    !difference_cycle(cs, dom)
}

/// Conjuncts of a constraint, splitting `&&`.
fn conjuncts<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e.kind() {
        ExprKind::Binary(BinaryOp::LAnd, l, r) => {
            conjuncts(l, out);
            conjuncts(r, out);
        }
        _ => out.push(e),
    }
}

/// Negative-cycle check over the atoms `x op y` and the domain bounds,
/// read as difference constraints `a - b <= k`.
fn difference_cycle(cs: &[Expr], dom: &Dom) -> bool {
    let ids: Vec<u32> = dom.keys().copied().collect();
    let node = |id: u32| ids.iter().position(|x| *x == id).map(|i| i + 1);
    let n = ids.len() + 1;
    let mut edges: Vec<(usize, usize, i128)> = Vec::new();
    for (i, iv) in dom.values().enumerate() {
        edges.push((0, i + 1, iv.hi));
        edges.push((i + 1, 0, -iv.lo));
    }
    let mut atoms = Vec::new();
    for c in cs {
        conjuncts(c, &mut atoms);
    }
    for a in atoms {
        let ExprKind::Binary(op, l, r) = a.kind() else { continue };
        let (ExprKind::Sym { id: x, .. }, ExprKind::Sym { id: y, .. }) = (l.kind(), r.kind()) else { continue };
        let (Some(x), Some(y)) = (node(*x), node(*y)) else { continue };
        // edge (u, v, k) encodes v - u <= k
        match op {
            BinaryOp::Lt => edges.push((y, x, -1)),
            BinaryOp::Le => edges.push((y, x, 0)),
            BinaryOp::Gt => edges.push((x, y, -1)),
            BinaryOp::Ge => edges.push((x, y, 0)),
            BinaryOp::Eq => {
                edges.push((y, x, 0));
                edges.push((x, y, 0));
            }
            _ => {}
        }
    }
    let mut dist = vec![0i128; n];
    for _ in 0..n {
        let mut changed = false;
        for &(u, v, k) in &edges {
            if dist[u] + k < dist[v] {
                dist[v] = dist[u] + k;
                changed = true;
            }
        }
        if !changed {
            return false;
        }
    }
    true
}

fn holds(cs: &[Expr], model: &Model) -> bool {
    cs.iter().all(|c| matches!(c.eval(model), Ok(v) if v != 0))
}

/// Candidate value inside an interval, as close to zero as possible.
fn pick(iv: Iv) -> i64 {
    (0i128.clamp(iv.lo, iv.hi)) as i64
}

struct Search {
    deadline: Instant,
    nodes: u64,
    cs: Vec<Expr>,
}

enum Step {
    Found(Model),
    None,
    Timeout,
}

impl Search {
    fn run(&mut self, mut dom: Dom) -> Step {
        self.nodes += 1;
        if self.nodes.is_multiple_of(256) && Instant::now() > self.deadline {
            return Step::Timeout;
        }
        if !propagate(&self.cs, &mut dom) {
            return Step::None;
        }
        let probe: Model = dom.iter().map(|(k, v)| (*k, pick(*v))).collect();
        if holds(&self.cs, &probe) {
            return Step::Found(probe);
        }
        let Some((&var, &iv)) = dom.iter().filter(|(_, v)| !v.is_point()).min_by_key(|(_, v)| v.width()) else {
            return Step::None;
        };
        let parts: Vec<Iv> = if iv.width() < 16 {
            let mut vals: Vec<i128> = (iv.lo..=iv.hi).collect();
            vals.sort_by_key(|v| (v.abs(), *v));
            vals.into_iter().map(Iv::point).collect()
        } else {
            let mid = iv.lo + (iv.hi - iv.lo) / 2;
            let low = Iv::new(iv.lo, mid);
            let high = Iv::new(mid + 1, iv.hi);
            // the half nearer to zero first
            if low.hi < 0 { vec![high, low] } else { vec![low, high] }
        };
        for part in parts {
            let mut d = dom.clone();
            d.insert(var, part);
            match self.run(d) {
                Step::None => {}
                other => return other,
            }
        }
        Step::None
    }
}

/// Decide a conjunction of constraints; each must evaluate to non-zero.
pub fn solve(constraints: &[Expr], timeout: Duration) -> SatResult {
    let cs: Vec<Expr> = constraints.iter().map(|c| c.simplify()).filter(|c| !c.is_true()).collect();
    if cs.iter().any(|c| c.is_false()) {
        return SatResult::Unsat;
    }
    if cs.iter().any(|c| !c.is_resolved()) {
        return SatResult::Unknown;
    }
    let mut dom = Dom::new();
    for c in &cs {
        c.visit(&mut |e| {
            if let ExprKind::Sym { id, width, .. } = e.kind() {
                dom.entry(*id).or_insert(sym_range(*width));
            }
        });
    }
    let start = Instant::now();
    // boxed rounds first; only the unbounded round can answer unsat
    for bits in [4u32, 16, 32] {
        let bound = 1i128 << bits;
        let boxed: Dom = dom.iter().map(|(k, v)| (*k, v.meet(Iv::new(-bound, bound)))).collect();
        if boxed == dom {
            break;
        }
        let deadline = (start + timeout / 8).min(start + timeout);
        let mut s = Search { deadline, nodes: 0, cs: cs.clone() };
        if let Step::Found(m) = s.run(boxed) {
            return SatResult::Sat(m);
        }
    }
    let mut s = Search { deadline: start + timeout, nodes: 0, cs };
    match s.run(dom) {
        Step::Found(m) => SatResult::Sat(m),
        Step::None => SatResult::Unsat,
        Step::Timeout => SatResult::Unknown,
    }
}

pub fn is_sat(constraints: &[Expr], timeout: Duration) -> bool {
    solve(constraints, timeout).is_sat()
}

/// SMT-LIB 2 rendering over 64-bit bit-vectors.
pub fn export_smtlib(constraints: &[Expr]) -> String {
    let mut syms = BTreeMap::new();
    for c in constraints {
        c.visit(&mut |e| {
            if let ExprKind::Sym { id, width, .. } = e.kind() {
                syms.insert(*id, *width);
            }
        });
    }
    let mut out = String::from("(set-logic QF_BV)\n");
    for (id, w) in &syms {
        writeln!(out, "(declare-fun s{id} () (_ BitVec {}))", 8 * u32::from(*w).min(8)).unwrap();
    }
    for c in constraints {
        let mut guards = Vec::new();
        let body = smt(c, &syms, &mut guards);
        for g in guards {
            writeln!(out, "(assert {g})").unwrap();
        }
        writeln!(out, "(assert (not (= {body} (_ bv0 64))))").unwrap();
    }
    out.push_str("(check-sat)\n");
    out
}

fn bv(v: i64) -> String {
    format!("(_ bv{} 64)", v as u64)
}

fn ite(cond: String) -> String {
    format!("(ite {cond} (_ bv1 64) (_ bv0 64))")
}

fn smt(e: &Expr, syms: &BTreeMap<u32, u8>, guards: &mut Vec<String>) -> String {
    match e.kind() {
        ExprKind::Const(v) => bv(*v),
        ExprKind::Sym { id, .. } => {
            let w = u32::from(syms[id]).min(8);
            if w >= 8 {
                format!("s{id}")
            } else {
                format!("((_ sign_extend {}) s{id})", 64 - 8 * w)
            }
        }
        ExprKind::Read { .. } => bv(0),
        ExprKind::AddrOf { obj, offset } => {
            format!("(bvadd {} {})", bv(base_address(*obj).unwrap_or(0)), smt(offset, syms, guards))
        }
        ExprKind::SignExt(a, n) => {
            let n = u32::from(*n).min(8);
            if n >= 8 {
                smt(a, syms, guards)
            } else {
                format!("((_ sign_extend {}) ((_ extract {} 0) {}))", 64 - 8 * n, 8 * n - 1, smt(a, syms, guards))
            }
        }
        ExprKind::Unary(UnaryOp::Neg, a) => format!("(bvneg {})", smt(a, syms, guards)),
        ExprKind::Unary(UnaryOp::Not, a) => ite(format!("(= {} (_ bv0 64))", smt(a, syms, guards))),
        ExprKind::Binary(op, l, r) => {
            let a = smt(l, syms, guards);
            let b = smt(r, syms, guards);
            let nz = |x: &str| format!("(not (= {x} (_ bv0 64)))");
            match op {
                BinaryOp::Add => format!("(bvadd {a} {b})"),
                BinaryOp::Sub => format!("(bvsub {a} {b})"),
                BinaryOp::Mul => format!("(bvmul {a} {b})"),
                BinaryOp::Div | BinaryOp::Rem => {
                    guards.push(nz(&b));
                    let f = if *op == BinaryOp::Div { "bvsdiv" } else { "bvsrem" };
                    format!("({f} {a} {b})")
                }
                BinaryOp::Eq => ite(format!("(= {a} {b})")),
                BinaryOp::Ne => ite(format!("(not (= {a} {b}))")),
                BinaryOp::Lt => ite(format!("(bvslt {a} {b})")),
                BinaryOp::Le => ite(format!("(bvsle {a} {b})")),
                BinaryOp::Gt => ite(format!("(bvsgt {a} {b})")),
                BinaryOp::Ge => ite(format!("(bvsge {a} {b})")),
                BinaryOp::LAnd => ite(format!("(and {} {})", nz(&a), nz(&b))),
                BinaryOp::LOr => ite(format!("(or {} {})", nz(&a), nz(&b))),
                BinaryOp::BitAnd => format!("(bvand {a} {b})"),
                BinaryOp::BitOr => format!("(bvor {a} {b})"),
                BinaryOp::Shl => format!("(bvshl {a} (bvand {b} (_ bv63 64)))"),
                BinaryOp::LShr => format!("(bvlshr {a} (bvand {b} (_ bv63 64)))"),
            }
        }
    }
}

/// True when every constraint evaluates to non-zero under `model`.
pub fn eval_all(constraints: &[Expr], model: &Model) -> bool {
    holds(constraints, model)
}
