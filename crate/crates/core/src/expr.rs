//! Symbolic expressions shared by the backward and forward executors.
//!
//! Expressions are immutable trees behind `Arc`; equality and ordering are
//! structural. Arithmetic is 64-bit two's complement with wraparound.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};
use std::sync::Arc;

use crate::lang::{Program, StmtId};

/// A memory object: the null object, a global, a heap allocation or an
/// abstract placeholder created during backward execution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectRef {
    Null,
    Global(u32),
    Heap(u32),
    Abstract(u32),
}

impl ObjectRef {
    pub fn is_abstract(self) -> bool {
        matches!(self, ObjectRef::Abstract(_))
    }

    pub fn is_heap(self) -> bool {
        matches!(self, ObjectRef::Heap(_))
    }
}

const GLOBAL_REGION: i64 = 1 << 44;
const HEAP_REGION: i64 = 1 << 52;
const HALF_SPAN: i64 = 1 << 31;

/// Concrete base address of a non-abstract object. Objects get disjoint
/// 4 GiB windows with the base in the middle.
pub fn base_address(o: ObjectRef) -> Option<i64> {
    match o {
        ObjectRef::Null => Some(0),
        ObjectRef::Global(i) => Some(GLOBAL_REGION + (i64::from(i) << 32) + HALF_SPAN),
        ObjectRef::Heap(i) => Some(HEAP_REGION + (i64::from(i) << 32) + HALF_SPAN),
        ObjectRef::Abstract(_) => None,
    }
}

/// Inverse of [`base_address`]: which object window an address falls in.
/// Addresses outside every window belong to `Null`.
pub fn object_at(addr: i64) -> (ObjectRef, i64) {
    let window = |region: i64| -> Option<(u32, i64)> {
        let rel = addr.checked_sub(region)?;
        if !(0..(1i64 << 40)).contains(&rel) {
            return None;
        }
        let id = (rel >> 32) as u32;
        Some((id, rel - (i64::from(id) << 32) - HALF_SPAN))
    };
    if let Some((id, off)) = window(HEAP_REGION) {
        return (ObjectRef::Heap(id), off);
    }
    if let Some((id, off)) = window(GLOBAL_REGION) {
        return (ObjectRef::Global(id), off);
    }
    (ObjectRef::Null, addr)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    LAnd,
    LOr,
    BitAnd,
    BitOr,
    Shl,
    /// Logical (unsigned) right shift.
    LShr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::LAnd => "&&",
            BinaryOp::LOr => "||",
            BinaryOp::BitAnd => "&",
            BinaryOp::BitOr => "|",
            BinaryOp::Shl => "<<",
            BinaryOp::LShr => ">>",
        }
    }

    pub fn is_relational(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }

    /// Relation that holds exactly when `self` does not.
    pub fn negated(self) -> Option<BinaryOp> {
        Some(match self {
            BinaryOp::Eq => BinaryOp::Ne,
            BinaryOp::Ne => BinaryOp::Eq,
            BinaryOp::Lt => BinaryOp::Ge,
            BinaryOp::Ge => BinaryOp::Lt,
            BinaryOp::Gt => BinaryOp::Le,
            BinaryOp::Le => BinaryOp::Gt,
            _ => return None,
        })
    }

    pub fn from_source(op: crate::lang::BinOp) -> BinaryOp {
        use crate::lang::BinOp as B;
        match op {
            B::Add => BinaryOp::Add,
            B::Sub => BinaryOp::Sub,
            B::Mul => BinaryOp::Mul,
            B::Div => BinaryOp::Div,
            B::Rem => BinaryOp::Rem,
            B::Eq => BinaryOp::Eq,
            B::Ne => BinaryOp::Ne,
            B::Lt => BinaryOp::Lt,
            B::Le => BinaryOp::Le,
            B::Gt => BinaryOp::Gt,
            B::Ge => BinaryOp::Ge,
            B::And => BinaryOp::LAnd,
            B::Or => BinaryOp::LOr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExprKind {
    Const(i64),
    /// Fresh input created by `newSymbolic` at `origin`.
    Sym { id: u32, width: u8, origin: StmtId },
    /// `width` bytes of `obj` starting at byte `offset`, sign-extended.
    Read { obj: ObjectRef, offset: Expr, width: u8 },
    /// Address of byte `offset` inside `obj`.
    AddrOf { obj: ObjectRef, offset: Expr },
    Unary(UnaryOp, Expr),
    Binary(BinaryOp, Expr, Expr),
    /// Sign-extend the low `n` bytes.
    SignExt(Expr, u8),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expr(Arc<ExprKind>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render(&DefaultNames))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&DefaultNames))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression still contains reads or abstract objects")]
    Unresolved,
    #[error("no value for symbol s{0}")]
    MissingSymbol(u32),
}

/// Sign-extend the low `n` bytes of `v`.
pub fn sext(v: i64, n: u8) -> i64 {
    if n >= 8 {
        return v;
    }
    let sh = 64 - 8 * u32::from(n);
    (v << sh) >> sh
}

/// Apply a binary operator to concrete operands.
pub fn apply_binary(op: BinaryOp, l: i64, r: i64) -> Result<i64, EvalError> {
    Ok(match op {
        BinaryOp::Add => l.wrapping_add(r),
        BinaryOp::Sub => l.wrapping_sub(r),
        BinaryOp::Mul => l.wrapping_mul(r),
        BinaryOp::Div => {
            if r == 0 {
                return Err(EvalError::DivisionByZero);
            }
            l.wrapping_div(r)
        }
        BinaryOp::Rem => {
            if r == 0 {
                return Err(EvalError::DivisionByZero);
            }
            l.wrapping_rem(r)
        }
        BinaryOp::Eq => i64::from(l == r),
        BinaryOp::Ne => i64::from(l != r),
        BinaryOp::Lt => i64::from(l < r),
        BinaryOp::Le => i64::from(l <= r),
        BinaryOp::Gt => i64::from(l > r),
        BinaryOp::Ge => i64::from(l >= r),
        BinaryOp::LAnd => i64::from(l != 0 && r != 0),
        BinaryOp::LOr => i64::from(l != 0 || r != 0),
        BinaryOp::BitAnd => l & r,
        BinaryOp::BitOr => l | r,
        BinaryOp::Shl => l.wrapping_shl((r & 63) as u32),
        BinaryOp::LShr => ((l as u64) >> (r & 63)) as i64,
    })
}

pub fn apply_unary(op: UnaryOp, v: i64) -> i64 {
    match op {
        UnaryOp::Neg => v.wrapping_neg(),
        UnaryOp::Not => i64::from(v == 0),
    }
}

impl Expr {
    pub fn new(k: ExprKind) -> Expr {
        Expr(Arc::new(k))
    }

    pub fn kind(&self) -> &ExprKind {
        &self.0
    }

    pub fn constant(v: i64) -> Expr {
        Expr::new(ExprKind::Const(v))
    }

    pub fn truth() -> Expr {
        Expr::constant(1)
    }

    pub fn sym(id: u32, width: u8, origin: StmtId) -> Expr {
        Expr::new(ExprKind::Sym { id, width, origin })
    }

    pub fn read(obj: ObjectRef, offset: Expr, width: u8) -> Expr {
        Expr::new(ExprKind::Read { obj, offset, width })
    }

    pub fn addr(obj: ObjectRef, offset: Expr) -> Expr {
        Expr::new(ExprKind::AddrOf { obj, offset })
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::new(ExprKind::Unary(op, e))
    }

    pub fn not(e: Expr) -> Expr {
        Expr::unary(UnaryOp::Not, e)
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Expr {
        Expr::new(ExprKind::Binary(op, l, r))
    }

    pub fn add(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, l, r)
    }

    pub fn sub(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, l, r)
    }

    pub fn mul(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, l, r)
    }

    pub fn eq(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Eq, l, r)
    }

    pub fn sign_ext(e: Expr, n: u8) -> Expr {
        Expr::new(ExprKind::SignExt(e, n))
    }

    pub fn as_const(&self) -> Option<i64> {
        match self.kind() {
            ExprKind::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self.as_const(), Some(v) if v != 0)
    }

    pub fn is_false(&self) -> bool {
        self.as_const() == Some(0)
    }

    /// Numeric value when the expression is a constant or the address of a
    /// concrete object at a constant offset.
    pub fn as_number(&self) -> Option<i64> {
        match self.kind() {
            ExprKind::Const(v) => Some(*v),
            ExprKind::AddrOf { obj, offset } => {
                Some(base_address(*obj)?.wrapping_add(offset.as_const()?))
            }
            _ => None,
        }
    }

    /// Children in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self.kind() {
            ExprKind::Const(_) | ExprKind::Sym { .. } => vec![],
            ExprKind::Read { offset, .. } | ExprKind::AddrOf { offset, .. } => vec![offset],
            ExprKind::Unary(_, e) | ExprKind::SignExt(e, _) => vec![e],
            ExprKind::Binary(_, l, r) => vec![l, r],
        }
    }

    /// Rebuild with children transformed by `f`; returns `self` when no
    /// child changed.
    pub fn map_children(&self, mut f: impl FnMut(&Expr) -> Expr) -> Expr {
        match self.kind() {
            ExprKind::Const(_) | ExprKind::Sym { .. } => self.clone(),
            ExprKind::Read { obj, offset, width } => {
                let o = f(offset);
                if &o == offset {
                    self.clone()
                } else {
                    Expr::read(*obj, o, *width)
                }
            }
            ExprKind::AddrOf { obj, offset } => {
                let o = f(offset);
                if &o == offset {
                    self.clone()
                } else {
                    Expr::addr(*obj, o)
                }
            }
            ExprKind::Unary(op, e) => {
                let n = f(e);
                if &n == e {
                    self.clone()
                } else {
                    Expr::unary(*op, n)
                }
            }
            ExprKind::SignExt(e, w) => {
                let n = f(e);
                if &n == e {
                    self.clone()
                } else {
                    Expr::sign_ext(n, *w)
                }
            }
            ExprKind::Binary(op, l, r) => {
                let nl = f(l);
                let nr = f(r);
                if &nl == l && &nr == r {
                    self.clone()
                } else {
                    Expr::binary(*op, nl, nr)
                }
            }
        }
    }

    /// Replace every occurrence of `old` by `new`.
    pub fn substitute(&self, old: &Expr, new: &Expr) -> Expr {
        if self == old {
            return new.clone();
        }
        self.map_children(|c| c.substitute(old, new))
    }

    /// Rebase every read and address of `from` onto `to`, shifting its
    /// offset by `delta`.
    pub fn replace_object(&self, from: ObjectRef, to: ObjectRef, delta: &Expr) -> Expr {
        let e = self.map_children(|c| c.replace_object(from, to, delta));
        match e.kind() {
            ExprKind::Read { obj, offset, width } if *obj == from => {
                Expr::read(to, shift(offset, delta), *width)
            }
            ExprKind::AddrOf { obj, offset } if *obj == from => Expr::addr(to, shift(offset, delta)),
            _ => e,
        }
    }

    pub fn objects(&self) -> BTreeSet<ObjectRef> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| match e.kind() {
            ExprKind::Read { obj, .. } | ExprKind::AddrOf { obj, .. } => {
                out.insert(*obj);
            }
            _ => {}
        });
        out
    }

    pub fn symbols(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let ExprKind::Sym { id, .. } = e.kind() {
                out.insert(*id);
            }
        });
        out
    }

    /// Origin statement of every symbol occurring in the expression.
    pub fn symbol_origins(&self) -> BTreeMap<u32, StmtId> {
        let mut out = BTreeMap::new();
        self.visit(&mut |e| {
            if let ExprKind::Sym { id, origin, .. } = e.kind() {
                out.insert(*id, *origin);
            }
        });
        out
    }

    pub fn has_reads(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e.kind(), ExprKind::Read { .. }));
        found
    }

    /// No reads and no abstract objects remain.
    pub fn is_resolved(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |e| match e.kind() {
            ExprKind::Read { .. } => ok = false,
            ExprKind::AddrOf { obj, .. } if obj.is_abstract() => ok = false,
            _ => {}
        });
        ok
    }

    fn has_division(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            found |= matches!(e.kind(), ExprKind::Binary(BinaryOp::Div | BinaryOp::Rem, ..))
        });
        found
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Evaluate a resolved expression under a symbol assignment.
    pub fn eval(&self, model: &BTreeMap<u32, i64>) -> Result<i64, EvalError> {
        match self.kind() {
            ExprKind::Const(v) => Ok(*v),
            ExprKind::Sym { id, .. } => model.get(id).copied().ok_or(EvalError::MissingSymbol(*id)),
            ExprKind::Read { .. } => Err(EvalError::Unresolved),
            ExprKind::AddrOf { obj, offset } => {
                let b = base_address(*obj).ok_or(EvalError::Unresolved)?;
                Ok(b.wrapping_add(offset.eval(model)?))
            }
            ExprKind::Unary(op, e) => Ok(apply_unary(*op, e.eval(model)?)),
            ExprKind::SignExt(e, n) => Ok(sext(e.eval(model)?, *n)),
            ExprKind::Binary(op, l, r) => {
                // both operands are always evaluated
                let l = l.eval(model)?;
                let r = r.eval(model)?;
                apply_binary(*op, l, r)
            }
        }
    }

    /// Constant folding and trivial identities. Idempotent and
    /// semantics-preserving.
    pub fn simplify(&self) -> Expr {
        let e = self.map_children(|c| c.simplify());
        simplify_node(&e)
    }

    pub fn render(&self, names: &dyn ObjectNames) -> String {
        let mut s = String::new();
        render_into(self, names, false, &mut s);
        s
    }
}

fn shift(offset: &Expr, delta: &Expr) -> Expr {
    if delta.as_const() == Some(0) {
        offset.clone()
    } else {
        Expr::add(offset.clone(), delta.clone()).simplify()
    }
}

fn simplify_node(e: &Expr) -> Expr {
    match e.kind() {
        ExprKind::Unary(op, a) => {
            if let Some(v) = a.as_number() {
                return Expr::constant(apply_unary(*op, v));
            }
            if *op == UnaryOp::Not {
                if let ExprKind::Binary(rel, l, r) = a.kind() {
                    if let Some(neg) = rel.negated() {
                        return simplify_node(&Expr::binary(neg, l.clone(), r.clone()));
                    }
                }
            }
            e.clone()
        }
        ExprKind::SignExt(a, n) => {
            if *n >= 8 {
                return a.clone();
            }
            if let Some(v) = a.as_const() {
                return Expr::constant(sext(v, *n));
            }
            if let ExprKind::SignExt(_, m) = a.kind() {
                if m <= n {
                    return a.clone();
                }
            }
            e.clone()
        }
        ExprKind::Binary(op, l, r) => simplify_binary(e, *op, l, r),
        _ => e.clone(),
    }
}

fn simplify_binary(e: &Expr, op: BinaryOp, l: &Expr, r: &Expr) -> Expr {
    // keep object identity for pointer arithmetic
    if let ExprKind::AddrOf { obj, offset } = l.kind() {
        if matches!(op, BinaryOp::Add | BinaryOp::Sub) && r.as_const().is_some() {
            return Expr::addr(*obj, Expr::binary(op, offset.clone(), r.clone()).simplify());
        }
    }
    if let ExprKind::AddrOf { obj, offset } = r.kind() {
        if op == BinaryOp::Add && l.as_const().is_some() {
            return Expr::addr(*obj, Expr::add(offset.clone(), l.clone()).simplify());
        }
    }
    if let (Some(a), Some(b)) = (l.as_number(), r.as_number()) {
        if let Ok(v) = apply_binary(op, a, b) {
            return Expr::constant(v);
        }
        return e.clone();
    }
    match op {
        BinaryOp::Add if r.as_const() == Some(0) => return l.clone(),
        BinaryOp::Add if l.as_const() == Some(0) => return r.clone(),
        BinaryOp::Sub if r.as_const() == Some(0) => return l.clone(),
        BinaryOp::Mul if r.as_const() == Some(1) => return l.clone(),
        BinaryOp::Mul if l.as_const() == Some(1) => return r.clone(),
        _ => {}
    }
    if op.is_relational() && l == r && !l.has_division() {
        let same = matches!(op, BinaryOp::Eq | BinaryOp::Le | BinaryOp::Ge);
        return Expr::constant(i64::from(same));
    }
    // addresses in the same object compare by offset
    if op.is_relational() {
        if let (ExprKind::AddrOf { obj: o1, offset: f1 }, ExprKind::AddrOf { obj: o2, offset: f2 }) =
            (l.kind(), r.kind())
        {
            if o1 == o2 {
                return simplify_node(&Expr::binary(op, f1.clone(), f2.clone()));
            }
        }
    }
    e.clone()
}

/// Names for objects in rendered expressions.
pub trait ObjectNames {
    fn object_name(&self, o: ObjectRef) -> String;
}

/// `g0`, `h1`, `a2`, `NULL`.
pub struct DefaultNames;

impl ObjectNames for DefaultNames {
    fn object_name(&self, o: ObjectRef) -> String {
        default_object_name(o)
    }
}

pub fn default_object_name(o: ObjectRef) -> String {
    match o {
        ObjectRef::Null => "NULL".into(),
        ObjectRef::Global(i) => format!("g{i}"),
        ObjectRef::Heap(i) => format!("h{i}"),
        ObjectRef::Abstract(i) => format!("a{i}"),
    }
}

impl ObjectNames for Program {
    fn object_name(&self, o: ObjectRef) -> String {
        match o {
            ObjectRef::Global(i) if (i as usize) < self.globals.len() => self.globals[i as usize].name.clone(),
            other => default_object_name(other),
        }
    }
}

fn render_into(e: &Expr, names: &dyn ObjectNames, nested: bool, out: &mut String) {
    match e.kind() {
        ExprKind::Const(v) => write!(out, "{v}").unwrap(),
        ExprKind::Sym { id, .. } => write!(out, "s{id}").unwrap(),
        ExprKind::Read { obj, offset, width } => {
            write!(out, "R({},", names.object_name(*obj)).unwrap();
            render_into(offset, names, false, out);
            write!(out, ",{width})").unwrap();
        }
        ExprKind::AddrOf { obj, offset } => {
            write!(out, "&{}+", names.object_name(*obj)).unwrap();
            render_into(offset, names, true, out);
        }
        ExprKind::Unary(op, a) => {
            out.push_str(match op {
                UnaryOp::Neg => "-(",
                UnaryOp::Not => "!(",
            });
            render_into(a, names, false, out);
            out.push(')');
        }
        ExprKind::SignExt(a, n) => {
            out.push_str("sext(");
            render_into(a, names, false, out);
            write!(out, ",{n})").unwrap();
        }
        ExprKind::Binary(op, l, r) => {
            if nested {
                out.push('(');
            }
            render_into(l, names, true, out);
            write!(out, " {} ", op.symbol()).unwrap();
            render_into(r, names, true, out);
            if nested {
                out.push(')');
            }
        }
    }
}

/// An (object, byte offset) pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AddressExpr {
    pub obj: ObjectRef,
    pub offset: Expr,
}

impl AddressExpr {
    pub fn new(obj: ObjectRef, offset: Expr) -> AddressExpr {
        AddressExpr { obj, offset }
    }

    pub fn at(obj: ObjectRef, offset: i64) -> AddressExpr {
        AddressExpr { obj, offset: Expr::constant(offset) }
    }

    /// The unique representation of NULL.
    pub fn null() -> AddressExpr {
        AddressExpr::at(ObjectRef::Null, 0)
    }

    /// `self ⊕ delta`
    pub fn plus(&self, delta: &Expr) -> AddressExpr {
        AddressExpr { obj: self.obj, offset: shift(&self.offset, delta) }
    }

    pub fn plus_const(&self, delta: i64) -> AddressExpr {
        self.plus(&Expr::constant(delta))
    }

    /// The pointer value `&obj + offset`.
    pub fn to_pointer(&self) -> Expr {
        Expr::addr(self.obj, self.offset.clone())
    }

    pub fn render(&self, names: &dyn ObjectNames) -> String {
        format!("({},{})", names.object_name(self.obj), self.offset.render(names))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(id: u32) -> Expr {
        Expr::sym(id, 8, StmtId(0))
    }

    fn c(v: i64) -> Expr {
        Expr::constant(v)
    }

    #[test]
    fn seven_equals_seven_is_true() {
        assert!(Expr::eq(c(7), c(7)).simplify().is_true());
    }

    #[test]
    fn additive_identity() {
        assert_eq!(Expr::add(s(1), c(0)).simplify(), s(1));
        assert_eq!(Expr::add(c(0), s(1)).simplify(), s(1));
    }

    #[test]
    fn rebase_two_abstracts_onto_one_heap_object() {
        let a1 = ObjectRef::Abstract(1);
        let a2 = ObjectRef::Abstract(2);
        let h1 = ObjectRef::Heap(1);
        let e = Expr::eq(Expr::read(a1, c(0), 8), Expr::read(a2, c(0), 8));
        let r = e.replace_object(a1, h1, &c(0)).replace_object(a2, h1, &c(0));
        assert_eq!(r, Expr::eq(Expr::read(h1, c(0), 8), Expr::read(h1, c(0), 8)));
        assert_eq!(r.to_string(), "R(h1,0,8) == R(h1,0,8)");
    }

    #[test]
    fn identity_substitution() {
        let e = Expr::add(s(1), Expr::read(ObjectRef::Global(0), c(0), 8));
        assert_eq!(e.substitute(&s(1), &s(1)), e);
    }

    #[test]
    fn nested_substitute_then_fold() {
        let r = Expr::read(ObjectRef::Abstract(0), c(0), 8);
        let e = Expr::add(r.clone(), r.clone());
        let sub = e.substitute(&r, &c(7));
        assert_eq!(sub, Expr::add(c(7), c(7)));
        assert_eq!(sub.simplify(), c(14));
    }

    #[test]
    fn division_by_zero() {
        let e = Expr::binary(BinaryOp::Div, s(1), c(0));
        assert_eq!(e.eval(&BTreeMap::from([(1, 5)])), Err(EvalError::DivisionByZero));
        assert_eq!(Expr::binary(BinaryOp::Div, c(3), c(0)).simplify(), Expr::binary(BinaryOp::Div, c(3), c(0)));
    }

    #[test]
    fn truncated_division_and_wraparound() {
        let m = BTreeMap::new();
        assert_eq!(Expr::binary(BinaryOp::Rem, c(-7), c(3)).eval(&m), Ok(-1));
        assert_eq!(Expr::binary(BinaryOp::Div, c(-7), c(2)).eval(&m), Ok(-3));
        assert_eq!(Expr::add(c(i64::MAX), c(1)).eval(&m), Ok(i64::MIN));
        assert_eq!(Expr::binary(BinaryOp::Div, c(i64::MIN), c(-1)).eval(&m), Ok(i64::MIN));
    }

    #[test]
    fn not_of_relation_flips() {
        let e = Expr::not(Expr::binary(BinaryOp::Lt, s(1), c(3))).simplify();
        assert_eq!(e, Expr::binary(BinaryOp::Ge, s(1), c(3)));
    }

    #[test]
    fn address_windows_roundtrip() {
        for o in [ObjectRef::Global(0), ObjectRef::Global(7), ObjectRef::Heap(0), ObjectRef::Heap(3)] {
            let b = base_address(o).unwrap();
            assert_eq!(object_at(b + 12), (o, 12));
            assert_eq!(object_at(b - 4), (o, -4));
        }
        assert_eq!(object_at(8), (ObjectRef::Null, 8));
        assert_ne!(base_address(ObjectRef::Heap(0)), base_address(ObjectRef::Global(0)));
    }

    #[test]
    fn pointer_arithmetic_keeps_object() {
        let h = ObjectRef::Heap(1);
        let p = Expr::add(Expr::addr(h, c(8)), c(8)).simplify();
        assert_eq!(p, Expr::addr(h, c(16)));
        let cmp = Expr::eq(Expr::addr(h, c(0)), c(0)).simplify();
        assert!(cmp.is_false());
        let null = Expr::eq(Expr::addr(ObjectRef::Null, c(0)), c(0)).simplify();
        assert!(null.is_true());
    }

    #[test]
    fn render_forms() {
        let e = Expr::add(Expr::read(ObjectRef::Heap(1), c(8), 4), Expr::addr(ObjectRef::Abstract(2), c(0)));
        assert_eq!(e.to_string(), "R(h1,8,4) + &a2+0");
        let n = Expr::not(Expr::binary(BinaryOp::Lt, s(1), Expr::mul(s(2), c(3))));
        assert_eq!(n.to_string(), "!(s1 < (s2 * 3))");
    }

    #[test]
    fn sext_values() {
        assert_eq!(sext(0xff, 1), -1);
        assert_eq!(sext(0x7f, 1), 127);
        assert_eq!(sext(0x1_0000_ffff, 2), -1);
        assert_eq!(Expr::sign_ext(c(0x80), 1).simplify(), c(-128));
    }

    fn ops() -> impl Strategy<Value = BinaryOp> {
        prop::sample::select(vec![
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Rem,
            BinaryOp::Eq,
            BinaryOp::Ne,
            BinaryOp::Lt,
            BinaryOp::Le,
            BinaryOp::Gt,
            BinaryOp::Ge,
            BinaryOp::LAnd,
            BinaryOp::LOr,
            BinaryOp::BitAnd,
            BinaryOp::BitOr,
            BinaryOp::Shl,
            BinaryOp::LShr,
        ])
    }

    fn expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-4i64..5).prop_map(c),
            (0u32..3).prop_map(s),
            Just(Expr::addr(ObjectRef::Heap(0), c(4))),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (ops(), inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::binary(o, l, r)),
                inner.clone().prop_map(Expr::not),
                inner.clone().prop_map(|e| Expr::unary(UnaryOp::Neg, e)),
                (inner, prop::sample::select(vec![1u8, 2, 4, 8])).prop_map(|(e, n)| Expr::sign_ext(e, n)),
            ]
        })
    }

    /// Direct evaluation of a small constant tree, written without the
    /// library evaluator.
    fn reference(op: BinaryOp, a: i64, b: i64) -> Option<i64> {
        Some(match op {
            BinaryOp::Add => a.wrapping_add(b),
            BinaryOp::Sub => a.wrapping_sub(b),
            BinaryOp::Mul => a.wrapping_mul(b),
            BinaryOp::Div => a.checked_div(b)?,
            BinaryOp::Rem => a.checked_rem(b)?,
            BinaryOp::Eq => (a == b) as i64,
            BinaryOp::Ne => (a != b) as i64,
            BinaryOp::Lt => (a < b) as i64,
            BinaryOp::Le => (a <= b) as i64,
            BinaryOp::Gt => (a > b) as i64,
            BinaryOp::Ge => (a >= b) as i64,
            _ => return None,
        })
    }

    proptest! {
        #[test]
        fn simplify_is_idempotent(e in expr()) {
            let once = e.simplify();
            prop_assert_eq!(once.simplify(), once);
        }

        #[test]
        fn simplify_preserves_meaning(e in expr(), v0 in -50i64..50, v1 in -50i64..50, v2 in any::<i64>()) {
            let m = BTreeMap::from([(0, v0), (1, v1), (2, v2)]);
            if let Ok(v) = e.eval(&m) {
                prop_assert_eq!(e.simplify().eval(&m), Ok(v));
            }
        }

        #[test]
        fn substitute_is_idempotent(e in expr(), v in -9i64..9) {
            let once = e.substitute(&s(1), &c(v));
            prop_assert_eq!(once.substitute(&s(1), &c(v)), once.clone());
            prop_assert!(!once.symbols().contains(&1));
        }

        #[test]
        fn substitute_agrees_with_evaluation(e in expr(), v0 in -20i64..20, v1 in -20i64..20, v2 in -20i64..20) {
            let m = BTreeMap::from([(0, v0), (1, v1), (2, v2)]);
            let sub = e.substitute(&s(1), &c(v1));
            match (e.eval(&m), sub.eval(&m)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn constant_trees_fold_to_direct_value(
            a in -100i64..100, b in -100i64..100, op in ops()
        ) {
            if let Some(want) = reference(op, a, b) {
                prop_assert_eq!(Expr::binary(op, c(a), c(b)).simplify(), c(want));
            }
        }
    }
}
