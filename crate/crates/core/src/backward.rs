//! Executing one statement backward.
//!
//! Each executed statement produces a [`SideEffect`] and updates the
//! points-to map and unification set. A pointer that is used before any
//! known definition (in backward order) gets a fresh abstract object.

use std::collections::BTreeSet;

use crate::cfg::Cfg;
use crate::expr::{AddressExpr, BinaryOp, Expr, ObjectNames, ObjectRef};
use crate::lang::{BinOp, Exp, ExpKind, NodeKind, Program, StmtId, Type, UnOp};
use crate::mem::{Access, AccessKind, BackwardState, Rule, SideEffect, StoreTuple, TraceRow, UnifPair};

/// Structural exploration bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Limits {
    /// Traversals allowed per in-cycle CFG edge on one path.
    pub edge: u32,
    /// Upper bound on the number of paths created in one run.
    pub fork: u32,
    /// Maximum history length of a path.
    pub path: usize,
}

impl Default for Limits {
    fn default() -> Limits {
        Limits { edge: 1, fork: u32::MAX, path: 512 }
    }
}

/// Run-wide path budget shared by every state of one exploration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForkBudget {
    pub paths_created: u32,
    /// Set when a limit removed a predecessor.
    pub limited: bool,
}

impl Default for ForkBudget {
    fn default() -> ForkBudget {
        ForkBudget { paths_created: 1, limited: false }
    }
}

/// Execute the next statement backward from `b`, returning one successor
/// per admissible predecessor, most preferred first.
pub fn execute_backward(
    p: &Program,
    cfg: &Cfg,
    b: &BackwardState,
    limits: &Limits,
    budget: &mut ForkBudget,
) -> Vec<BackwardState> {
    let candidates: Vec<StmtId> =
        if b.history.is_empty() { vec![b.pc] } else { cfg.preds(b.pc).to_vec() };
    let mut out = Vec::new();
    for st in candidates {
        let mut edge_key = None;
        if !b.history.is_empty() && cfg.is_in_cycle(st, b.pc) {
            let n = b.edge_counts.get(&(st, b.pc)).copied().unwrap_or(0);
            if n >= limits.edge {
                budget.limited = true;
                continue;
            }
            edge_key = Some((st, b.pc));
        }
        if matches!(p.node(st).kind, NodeKind::Abort) && !b.history.is_empty() {
            continue;
        }
        if !out.is_empty() {
            if budget.paths_created >= limits.fork {
                budget.limited = true;
                break;
            }
            budget.paths_created += 1;
        }
        let mut nb = b.clone();
        if let Some(k) = edge_key {
            *nb.edge_counts.entry(k).or_insert(0) += 1;
        }
        execute_statement(p, cfg, &mut nb, st);
        out.push(nb);
    }
    out
}

/// Apply the backward semantics of `st` to `b` and append its side effect.
pub fn execute_statement(p: &Program, cfg: &Cfg, b: &mut BackwardState, st: StmtId) {
    let first = b.history.is_empty();
    let prev = b.history.last().map(|h| h.stmt);
    let mut ex = Exec { p, b, se: SideEffect::empty(st), rule: None };
    match &p.node(st).kind {
        NodeKind::AssignSymbolic { lhs } => {
            let loc = ex.addr(lhs);
            let w = width_of(p, &lhs.ty);
            ex.access(AccessKind::Write, &loc, w);
            let s = ex.b.new_symbol(st, w as u8);
            ex.se.w = Some(StoreTuple { dest: loc, value: s, width: w });
        }
        NodeKind::Assign { lhs, rhs } if !lhs.ty.is_ptr() => {
            let v = ex.val(rhs);
            let loc = ex.addr(lhs);
            let w = width_of(p, &lhs.ty);
            ex.access(AccessKind::Write, &loc, w);
            ex.se.w = Some(StoreTuple { dest: loc, value: v, width: w });
        }
        NodeKind::Assign { lhs, rhs } => {
            let loc = ex.addr(lhs);
            ex.access(AccessKind::Write, &loc, 8);
            let lhs_target = ex.b.phi_lookup(&loc);
            if lhs_target.is_some() {
                ex.b.phi_update(&loc, None);
            }
            let (target, materialized) = ex.pointee_tracked(rhs, rhs);
            ex.rule = Some(match (lhs_target.is_some(), materialized) {
                (false, true) => Rule::S1,
                (true, true) => Rule::S2,
                (false, false) => Rule::S3,
                (true, false) => Rule::S4,
            });
            if let Some(t) = lhs_target {
                ex.unify(UnifPair::new(t, target.clone()));
            }
            ex.se.w = Some(StoreTuple { dest: loc, value: target.to_pointer(), width: 8 });
        }
        NodeKind::Malloc { lhs, size } => {
            let loc = ex.addr(lhs);
            ex.access(AccessKind::Write, &loc, 8);
            let h = ex.b.new_object(false, *size, st);
            let ha = AddressExpr::at(h, 0);
            match ex.b.phi_lookup(&loc) {
                Some(t) => {
                    ex.b.phi_update(&loc, None);
                    ex.unify(UnifPair::new(ha.clone(), t));
                    ex.rule = Some(Rule::S6);
                }
                None => ex.rule = Some(Rule::S5),
            }
            ex.se.w = Some(StoreTuple { dest: loc, value: ha.to_pointer(), width: 8 });
        }
        NodeKind::Free { arg } => {
            let (target, materialized) = ex.pointee_tracked(arg, arg);
            ex.rule = Some(if materialized { Rule::S7 } else { Rule::S8 });
            let idx = ex.b.history.len();
            ex.b.free_events.push((idx, target.clone()));
            ex.se.free = Some(target);
        }
        NodeKind::If { cond, else_node } => {
            // coming from our own else branch: the else node already
            // asserted the negated condition
            if prev != Some(*else_node) {
                let c = ex.condition(cond);
                ex.se.c = c;
            }
        }
        NodeKind::Else { cond, .. } => {
            let c = ex.condition(cond);
            ex.se.c = Expr::not(c).simplify();
        }
        NodeKind::While { cond } => {
            let c = ex.condition(cond);
            let from_body = match prev {
                Some(s) => s == st || cfg.loop_body(st).is_some_and(|body| body.contains(&s)),
                None => false,
            };
            ex.se.c = if from_body { c } else { Expr::not(c).simplify() };
        }
        NodeKind::Abort | NodeKind::Skip => {}
    }
    let Exec { se, rule, .. } = ex;
    let mut se = se;
    se.rule = rule;
    b.pc = st;
    b.since_pass += 1;
    b.history.push(se);
    if b.trace.is_some() {
        let what = if first { "Initial State".to_string() } else { p.node_to_string(st) };
        push_row(p, b, what, true);
    }
}

fn width_of(p: &Program, ty: &Type) -> u64 {
    p.size_of(ty)
}

struct Exec<'a> {
    p: &'a Program,
    b: &'a mut BackwardState,
    se: SideEffect,
    rule: Option<Rule>,
}

impl Exec<'_> {
    fn access(&mut self, kind: AccessKind, addr: &AddressExpr, width: u64) {
        if let Some(off) = addr.offset.simplify().as_const() {
            if off >= 0 {
                self.b.grow(addr.obj, off as u64 + width);
            }
        }
        self.se.accesses.push(Access { kind, addr: addr.clone(), width });
    }

    fn unify(&mut self, u: UnifPair) {
        let before = self.b.unif.len();
        self.b.add_unification(u.clone());
        if let Some(t) = &mut self.b.trace {
            if self.b.unif.len() > before {
                t.next_u += 1;
                t.unif_labels.push(format!("u{}", t.next_u));
            }
        }
        self.se.u = Some(u);
    }

    /// Address of an lvalue.
    fn addr(&mut self, e: &Exp) -> AddressExpr {
        match &e.kind {
            ExpKind::Var(g) => AddressExpr::at(ObjectRef::Global(g.0), 0),
            ExpKind::Deref(pe) => self.pointee(pe, e),
            ExpKind::Arrow(pe, f) => self.pointee(pe, e).plus_const(f.offset as i64),
            ExpKind::Index(base, idx) => {
                let es = self.p.size_of(&e.ty) as i64;
                let i = self.val(idx);
                let base_addr = match base.ty {
                    Type::Array(..) => self.addr(base),
                    _ => self.pointee(base, e),
                };
                base_addr.plus(&Expr::mul(Expr::constant(es), i).simplify())
            }
            _ => AddressExpr::null(),
        }
    }

    fn pointee(&mut self, pe: &Exp, ctx: &Exp) -> AddressExpr {
        self.pointee_tracked(pe, ctx).0
    }

    /// Location a pointer expression points to, and whether an abstract
    /// object had to be created for it.
    fn pointee_tracked(&mut self, pe: &Exp, ctx: &Exp) -> (AddressExpr, bool) {
        match &pe.kind {
            ExpKind::Null | ExpKind::Const(_) => (AddressExpr::null(), false),
            ExpKind::AddrOf(lv) => (self.addr(lv), false),
            ExpKind::Binary(op @ (BinOp::Add | BinOp::Sub), base, idx) => {
                let es = pe.ty.pointee().map(|t| self.p.size_of(t)).unwrap_or(1) as i64;
                let i = self.val(idx);
                let (a, m) = self.pointee_tracked(base, ctx);
                let mut delta = Expr::mul(Expr::constant(es), i);
                if *op == BinOp::Sub {
                    delta = Expr::unary(crate::expr::UnaryOp::Neg, delta);
                }
                (a.plus(&delta.simplify()), m)
            }
            _ if pe.is_lvalue() => {
                let loc = self.addr(pe);
                self.access(AccessKind::Read, &loc, 8);
                match self.b.phi_lookup(&loc) {
                    Some(t) => (t, false),
                    None => {
                        let ao = self.b.new_object(true, 0, self.se.stmt);
                        let t = AddressExpr::at(ao, 0);
                        self.b.phi_update(&loc, Some(t.clone()));
                        if self.b.trace.is_some() {
                            let what = self.p.exp_to_string(ctx);
                            push_row(self.p, self.b, what, false);
                        }
                        (t, true)
                    }
                }
            }
            _ => (AddressExpr::null(), false),
        }
    }

    /// Symbolic value of an expression, operands evaluated right to left.
    fn val(&mut self, e: &Exp) -> Expr {
        if e.ty.is_ptr() {
            return self.pointee(e, e).to_pointer();
        }
        match &e.kind {
            ExpKind::Const(v) => Expr::constant(*v),
            ExpKind::Null => Expr::constant(0),
            ExpKind::AddrOf(lv) => self.addr(lv).to_pointer(),
            ExpKind::Unary(op, a) => {
                let v = self.val(a);
                let op = match op {
                    UnOp::Neg => crate::expr::UnaryOp::Neg,
                    UnOp::Not => crate::expr::UnaryOp::Not,
                };
                Expr::unary(op, v)
            }
            ExpKind::Binary(op, l, r) => {
                let vr = self.val(r);
                let vl = self.val(l);
                Expr::binary(BinaryOp::from_source(*op), vl, vr)
            }
            _ if e.is_lvalue() => {
                let loc = self.addr(e);
                let w = width_of(self.p, &e.ty);
                self.access(AccessKind::Read, &loc, w);
                Expr::read(loc.obj, loc.offset, w as u8)
            }
            _ => Expr::constant(0),
        }
    }

    /// Branch condition as a 0/1 valued expression.
    fn condition(&mut self, cond: &Exp) -> Expr {
        let v = self.val(cond);
        let boolean = match &cond.kind {
            ExpKind::Binary(op, ..) => op.is_relational() || matches!(op, BinOp::And | BinOp::Or),
            ExpKind::Unary(UnOp::Not, _) => true,
            _ => false,
        };
        let c = if boolean { v } else { Expr::binary(BinaryOp::Ne, v, Expr::constant(0)) };
        c.simplify()
    }
}

/// Snapshot the state into a trace row.
fn push_row(p: &Program, b: &mut BackwardState, what: String, with_effect: bool) {
    let names: &dyn ObjectNames = p;
    let mut globals = Vec::new();
    let mut abstracts = Vec::new();
    let mut heap = Vec::new();
    for o in b.objects.keys() {
        let n = names.object_name(*o);
        match o {
            ObjectRef::Global(_) => globals.push(n),
            ObjectRef::Abstract(_) => abstracts.push(n),
            ObjectRef::Heap(_) => heap.push(n),
            ObjectRef::Null => {}
        }
    }
    let mut phi = Vec::new();
    let mut shown = BTreeSet::new();
    for (i, g) in p.globals.iter().enumerate() {
        let o = ObjectRef::Global(i as u32);
        for off in p.pointer_slots(&g.ty) {
            let key = AddressExpr::at(o, off as i64);
            shown.insert((o, key.offset.clone()));
            let t = b.phi_lookup(&key).map(|t| t.render(names)).unwrap_or_else(|| "⊥".into());
            phi.push(format!("({},{})", key.render(names), t));
        }
    }
    for ((o, off), t) in &b.phi {
        if !shown.contains(&(*o, off.clone())) {
            let key = AddressExpr::new(*o, off.clone());
            phi.push(format!("({},{})", key.render(names), t.render(names)));
        }
    }
    let effect = if with_effect { effect_label(p, b) } else { "-".into() };
    let trace = b.trace.as_mut().expect("tracing enabled");
    let unif = trace.unif_labels.clone();
    let step = trace.rows.len() + 1;
    trace.rows.push(TraceRow { step, what, globals, abstracts, heap, phi, effect, unif });
}

fn effect_label(p: &Program, b: &mut BackwardState) -> String {
    let names: &dyn ObjectNames = p;
    let se = b.history.last().expect("side effect recorded").clone();
    let trace = b.trace.as_mut().expect("tracing enabled");
    if let Some(u) = &se.u {
        let idx = b.unif.iter().position(|x| x.same(u));
        let label = idx
            .and_then(|i| trace.unif_labels.get(i).cloned())
            .unwrap_or_else(|| "u".into());
        return format!("{label}:{}", u.render(names));
    }
    if let Some(w) = &se.w {
        trace.next_w += 1;
        return format!("w{}:({},{})", trace.next_w, w.dest.render(names), w.value.render(names));
    }
    if let Some(f) = &se.free {
        return format!("free:{}", f.render(names));
    }
    if !se.c.is_true() {
        trace.next_c += 1;
        return format!("c{}={}", trace.next_c, se.c.render(names));
    }
    "-".into()
}
