//! Shared test support: a concrete reference interpreter and random
//! program generators.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use tse_core::expr::{base_address, object_at, sext, ObjectRef};
use tse_core::lang::{BinOp, Exp, ExpKind, Program, Stmt, StmtId, StmtKind, Type, UnOp};

/// Result of one concrete execution.
#[derive(Clone, Debug)]
pub struct Run {
    pub reached: bool,
    /// Global bytes when the target was reached (or at the end).
    pub globals: Vec<Vec<u8>>,
    /// Statements that faulted (null, out of bounds, freed memory).
    pub faults: Vec<StmtId>,
    pub steps: usize,
}

enum Flow {
    Go,
    Reached,
    Halt,
}

/// Byte-level interpreter over the statement tree.
pub struct Concrete<'a> {
    p: &'a Program,
    mem: BTreeMap<ObjectRef, Vec<u8>>,
    freed: Vec<ObjectRef>,
    next_heap: u32,
    target: StmtId,
    inputs: &'a mut dyn FnMut(StmtId) -> i64,
    steps: usize,
    max_steps: usize,
    faults: Vec<StmtId>,
    cur: StmtId,
}

pub fn run_concrete(p: &Program, target: StmtId, inputs: &mut dyn FnMut(StmtId) -> i64, max_steps: usize) -> Run {
    let mut mem = BTreeMap::new();
    for (i, g) in p.globals.iter().enumerate() {
        let size = p.size_of(&g.ty) as usize;
        let mut bytes = vec![0u8; size];
        if let Some(v) = g.init {
            let n = size.min(8);
            bytes[..n].copy_from_slice(&v.to_le_bytes()[..n]);
        }
        mem.insert(ObjectRef::Global(i as u32), bytes);
    }
    let mut m = Concrete {
        p,
        mem,
        freed: Vec::new(),
        next_heap: 1,
        target,
        inputs,
        steps: 0,
        max_steps,
        faults: Vec::new(),
        cur: StmtId(0),
    };
    let reached = matches!(m.block(&p.body), Flow::Reached);
    let globals = (0..p.globals.len()).map(|i| m.mem[&ObjectRef::Global(i as u32)].clone()).collect();
    Run { reached, globals, faults: m.faults, steps: m.steps }
}

/// Little-endian bytes read back as a sign-extended value.
pub fn load(bytes: &[u8], off: usize, width: usize) -> i64 {
    let mut buf = [0u8; 8];
    buf[..width].copy_from_slice(&bytes[off..off + width]);
    sext(i64::from_le_bytes(buf), width as u8)
}

impl Concrete<'_> {
    fn block(&mut self, body: &[Stmt]) -> Flow {
        for s in body {
            match self.stmt(s) {
                Flow::Go => {}
                other => return other,
            }
        }
        Flow::Go
    }

    fn stmt(&mut self, s: &Stmt) -> Flow {
        if s.id == self.target {
            return Flow::Reached;
        }
        if self.steps >= self.max_steps {
            return Flow::Halt;
        }
        self.steps += 1;
        self.cur = s.id;
        match &s.kind {
            StmtKind::AssignSymbolic(lhs) => {
                let v = (self.inputs)(s.id);
                let a = self.lvaddr(lhs);
                self.store(a, self.p.size_of(&lhs.ty) as usize, v);
            }
            StmtKind::Assign(lhs, rhs) => {
                let v = self.eval(rhs);
                let a = self.lvaddr(lhs);
                self.store(a, self.p.size_of(&lhs.ty) as usize, v);
            }
            StmtKind::Malloc(lhs, size) => {
                let a = self.lvaddr(lhs);
                let h = ObjectRef::Heap(self.next_heap);
                self.next_heap += 1;
                self.mem.insert(h, vec![0; *size as usize]);
                self.store(a, 8, base_address(h).unwrap());
            }
            StmtKind::Free(arg) => {
                let (o, off) = object_at(self.eval(arg));
                if !o.is_heap() || off != 0 || self.freed.contains(&o) {
                    self.faults.push(s.id);
                } else {
                    self.freed.push(o);
                }
            }
            StmtKind::If { cond, then_body, else_id, else_body, .. } => {
                if self.eval(cond) != 0 {
                    return self.block(then_body);
                }
                if *else_id == self.target {
                    return Flow::Reached;
                }
                return self.block(else_body);
            }
            StmtKind::While { cond, body } => loop {
                if self.eval(cond) == 0 {
                    return Flow::Go;
                }
                match self.block(body) {
                    Flow::Go => {}
                    other => return other,
                }
                if s.id == self.target {
                    return Flow::Reached;
                }
                if self.steps >= self.max_steps {
                    return Flow::Halt;
                }
                self.steps += 1;
            },
            StmtKind::Abort => return Flow::Halt,
            StmtKind::Skip => {}
        }
        Flow::Go
    }

    fn locate(&mut self, addr: i64, width: usize) -> Option<(ObjectRef, usize)> {
        let (o, off) = object_at(addr);
        let ok = self.mem.get(&o).is_some_and(|b| off >= 0 && off as usize + width <= b.len());
        if !ok || self.freed.contains(&o) {
            self.faults.push(self.cur);
        }
        ok.then_some((o, off as usize))
    }

    fn load(&mut self, addr: i64, width: usize) -> i64 {
        match self.locate(addr, width) {
            Some((o, off)) => load(&self.mem[&o], off, width),
            None => 0,
        }
    }

    fn store(&mut self, addr: i64, width: usize, v: i64) {
        if let Some((o, off)) = self.locate(addr, width) {
            let bytes = self.mem.get_mut(&o).unwrap();
            bytes[off..off + width].copy_from_slice(&v.to_le_bytes()[..width]);
        }
    }

    fn lvaddr(&mut self, e: &Exp) -> i64 {
        match &e.kind {
            ExpKind::Var(g) => base_address(ObjectRef::Global(g.0)).unwrap(),
            ExpKind::Deref(pe) => self.eval(pe),
            ExpKind::Arrow(pe, f) => self.eval(pe).wrapping_add(f.offset as i64),
            ExpKind::Index(b, i) => {
                let es = self.p.size_of(&e.ty) as i64;
                let base = if matches!(b.ty, Type::Array(..)) { self.lvaddr(b) } else { self.eval(b) };
                base.wrapping_add(es.wrapping_mul(self.eval(i)))
            }
            _ => 0,
        }
    }

    fn eval(&mut self, e: &Exp) -> i64 {
        match &e.kind {
            ExpKind::Const(v) => *v,
            ExpKind::Null => 0,
            ExpKind::AddrOf(lv) => self.lvaddr(lv),
            ExpKind::Unary(UnOp::Neg, a) => self.eval(a).wrapping_neg(),
            ExpKind::Unary(UnOp::Not, a) => i64::from(self.eval(a) == 0),
            ExpKind::Binary(op, l, r) => {
                let b = self.eval(r);
                let a = self.eval(l);
                if e.ty.is_ptr() {
                    let es = e.ty.pointee().map(|t| self.p.size_of(t)).unwrap_or(1) as i64;
                    let d = es.wrapping_mul(b);
                    return if *op == BinOp::Sub { a.wrapping_sub(d) } else { a.wrapping_add(d) };
                }
                match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div => a.checked_div(b).unwrap_or(0),
                    BinOp::Rem => a.checked_rem(b).unwrap_or(0),
                    BinOp::Eq => i64::from(a == b),
                    BinOp::Ne => i64::from(a != b),
                    BinOp::Lt => i64::from(a < b),
                    BinOp::Le => i64::from(a <= b),
                    BinOp::Gt => i64::from(a > b),
                    BinOp::Ge => i64::from(a >= b),
                    BinOp::And => i64::from(a != 0 && b != 0),
                    BinOp::Or => i64::from(a != 0 || b != 0),
                }
            }
            _ if e.is_lvalue() => {
                let a = self.lvaddr(e);
                let w = self.p.size_of(&e.ty) as usize;
                self.load(a, w)
            }
            _ => 0,
        }
    }
}

/// Run `p` once for every input vector in `[-r, r]^k`, where `k` counts
/// the `newSymbolic` statements, until one reaches the target.
pub fn reachable_by_enumeration(p: &Program, target: StmtId, syms: &[StmtId], r: i64, max_steps: usize) -> bool {
    let k = syms.len();
    let side = (2 * r + 1) as usize;
    let total = side.pow(k as u32);
    (0..total).any(|mut code| {
        let mut vals = BTreeMap::new();
        for s in syms {
            vals.insert(*s, (code % side) as i64 - r);
            code /= side;
        }
        run_concrete(p, target, &mut |s| vals.get(&s).copied().unwrap_or(0), max_steps).reached
    })
}

/// `newSymbolic` statements of `p`.
pub fn symbolic_stmts(p: &Program) -> Vec<StmtId> {
    p.nodes
        .iter()
        .filter(|n| matches!(n.kind, tse_core::lang::NodeKind::AssignSymbolic { .. }))
        .map(|n| n.id)
        .collect()
}

const INTS: [&str; 3] = ["x", "y", "z"];
const PTRS: [&str; 3] = ["p", "q", "r"];
const COUNTERS: [&str; 2] = ["k1", "k2"];
const RELOPS: [&str; 6] = ["==", "!=", "<", "<=", ">", ">="];

/// Random structured programs with one target label `t`. At most
/// `max_stmts` statements, loops with constant bounds up to 3, three
/// pointers (always aimed at valid memory before use) and two
/// `newSymbolic` inputs outside loops.
pub struct ProgramGen<'r, R: Rng> {
    rng: &'r mut R,
    budget: usize,
    syms: usize,
    target_placed: bool,
    counters_used: usize,
}

impl<'r, R: Rng> ProgramGen<'r, R> {
    pub fn generate(rng: &'r mut R, max_stmts: usize) -> String {
        let mut g = ProgramGen { rng, budget: max_stmts - 1, syms: 0, target_placed: false, counters_used: 0 };
        let mut ready = Vec::new();
        let mut body = g.block(0, false, &mut ready, 6);
        if !g.target_placed {
            body.push("t: skip;".to_string());
        }
        let mut src = String::from("int x, y, z, k1, k2;\nint *p, *q, *r;\n");
        for line in body {
            src.push_str(&line);
            src.push('\n');
        }
        src
    }

    fn konst(&mut self) -> i64 {
        self.rng.gen_range(-3..=3)
    }

    fn int_var(&mut self) -> &'static str {
        INTS.choose(self.rng).unwrap()
    }

    fn operand(&mut self, ready: &[&'static str]) -> String {
        match self.rng.gen_range(0..4) {
            0 => self.konst().to_string(),
            1 if !ready.is_empty() => format!("*{}", ready.choose(self.rng).unwrap()),
            _ => self.int_var().to_string(),
        }
    }

    fn rhs(&mut self, ready: &[&'static str]) -> String {
        match self.rng.gen_range(0..5) {
            0 => self.konst().to_string(),
            1 => format!("{} + {}", self.int_var(), self.konst()),
            2 => format!("{} - {}", self.int_var(), self.int_var()),
            _ => self.operand(ready),
        }
    }

    fn cond(&mut self, ready: &[&'static str]) -> String {
        let l = self.operand(ready);
        let op = RELOPS.choose(self.rng).unwrap();
        let r = if self.rng.gen_bool(0.6) { self.konst().to_string() } else { self.int_var().to_string() };
        format!("{l} {op} {r}")
    }

    fn block(&mut self, depth: usize, in_loop: bool, ready: &mut Vec<&'static str>, max_len: usize) -> Vec<String> {
        let mut out = Vec::new();
        let len = self.rng.gen_range(1..=max_len);
        for _ in 0..len {
            if self.budget == 0 {
                break;
            }
            if !self.target_placed && self.rng.gen_bool(0.12) {
                self.target_placed = true;
                out.push("t: skip;".into());
                continue;
            }
            out.extend(self.stmt(depth, in_loop, ready));
        }
        out
    }

    fn stmt(&mut self, depth: usize, in_loop: bool, ready: &mut Vec<&'static str>) -> Vec<String> {
        let pick = self.rng.gen_range(0..10);
        match pick {
            0 if !in_loop && self.syms < 2 => {
                self.budget -= 1;
                self.syms += 1;
                vec![format!("{} = newSymbolic;", self.int_var())]
            }
            1 if !ready.is_empty() => {
                self.budget -= 1;
                let ptr = *ready.choose(self.rng).unwrap();
                vec![format!("*{ptr} = {};", self.rhs(ready))]
            }
            2 | 3 => {
                self.budget -= 1;
                let ptr = *PTRS.choose(self.rng).unwrap();
                let line = match self.rng.gen_range(0..3) {
                    0 => format!("{ptr} = &{};", self.int_var()),
                    1 => format!("{ptr} = malloc(16);"),
                    _ => match ready.iter().copied().find(|x| *x != ptr) {
                        Some(src) => format!("{ptr} = {src};"),
                        None => format!("{ptr} = &{};", self.int_var()),
                    },
                };
                if !ready.contains(&ptr) {
                    ready.push(ptr);
                }
                vec![line]
            }
            4 | 5 if depth < 2 && self.budget >= 2 => {
                self.budget -= 1;
                let c = self.cond(ready);
                let mut then_ready = ready.clone();
                let then_body = self.block(depth + 1, in_loop, &mut then_ready, 3);
                let mut lines = vec![format!("if ({c}) {{")];
                lines.extend(then_body.into_iter().map(|l| format!("    {l}")));
                if self.budget >= 1 && self.rng.gen_bool(0.5) {
                    let mut else_ready = ready.clone();
                    let else_body = self.block(depth + 1, in_loop, &mut else_ready, 3);
                    lines.push("} else {".into());
                    lines.extend(else_body.into_iter().map(|l| format!("    {l}")));
                    ready.retain(|x| then_ready.contains(x) && else_ready.contains(x));
                } else {
                    ready.retain(|x| then_ready.contains(x));
                }
                lines.push("}".into());
                lines
            }
            6 if depth < 2 && self.budget >= 4 && self.counters_used < COUNTERS.len() => {
                self.budget -= 3;
                let k = COUNTERS[self.counters_used];
                self.counters_used += 1;
                let bound = self.rng.gen_range(1..=3);
                let mut body_ready = ready.clone();
                let body = self.loop_body(depth + 1, &mut body_ready);
                let mut lines = vec![format!("{k} = 0;"), format!("while ({k} < {bound}) {{")];
                lines.extend(body.into_iter().map(|l| format!("    {l}")));
                lines.push(format!("    {k} = {k} + 1;"));
                lines.push("}".into());
                lines
            }
            _ => {
                self.budget -= 1;
                let v = self.int_var();
                vec![format!("{v} = {};", self.rhs(ready))]
            }
        }
    }

    /// Loop bodies only copy and overwrite, so values stay within a few
    /// units of the inputs however often the body runs.
    fn loop_body(&mut self, depth: usize, ready: &mut Vec<&'static str>) -> Vec<String> {
        let mut out = Vec::new();
        let len = self.rng.gen_range(1..=3);
        for _ in 0..len {
            if self.budget == 0 {
                break;
            }
            if !self.target_placed && self.rng.gen_bool(0.1) {
                self.target_placed = true;
                out.push("t: skip;".into());
                continue;
            }
            self.budget -= 1;
            let v = self.int_var();
            let line = match self.rng.gen_range(0..4) {
                0 => format!("{v} = {};", self.konst()),
                1 => format!("{v} = {};", self.int_var()),
                2 if depth < 2 && self.budget >= 1 => {
                    self.budget -= 1;
                    let c = self.cond(ready);
                    format!("if ({c}) {{ {v} = {}; }}", self.konst())
                }
                _ => match ready.first() {
                    Some(ptr) => format!("*{ptr} = {};", self.konst()),
                    None => format!("{v} = {};", self.int_var()),
                },
            };
            out.push(line);
        }
        out
    }
}

/// Straight-line programs with overlapping writes of 1, 2, 4 and 8 bytes
/// into two 8-byte globals and one 16-byte heap block, followed by
/// reads into result globals. Ends with `t: skip;`.
pub fn straight_line_program<R: Rng>(rng: &mut R, len: usize) -> String {
    let mut src = String::from(
        "int g0, g1, r0, r1, r2, r3;\nchar *c;\nshort *s;\ni32 *w;\nint *h;\nh = malloc(16);\n",
    );
    // (object, byte offset) each pointer currently holds
    let objects = [("&g0", 8usize), ("&g1", 8), ("h", 16)];
    let mut aim: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let ptrs = [("c", 1usize), ("s", 2), ("w", 4)];
    for (name, _) in ptrs {
        let o = rng.gen_range(0..objects.len());
        src.push_str(&format!("{name} = {};\n", objects[o].0));
        aim.insert(name, (o, 0));
    }
    let results = ["r0", "r1", "r2", "r3"];
    for _ in 0..len {
        let (ptr, width) = *ptrs.choose(rng).unwrap();
        let (o, off) = aim[ptr];
        let size = objects[o].1;
        match rng.gen_range(0..8) {
            0 => {
                // re-aim at a fresh in-bounds byte offset
                let o = rng.gen_range(0..objects.len());
                let size = objects[o].1;
                let steps = rng.gen_range(0..=(size - width) / width);
                src.push_str(&format!("{ptr} = {};\n", objects[o].0));
                if steps > 0 {
                    src.push_str(&format!("{ptr} = {ptr} + {steps};\n"));
                }
                aim.insert(ptr, (o, steps * width));
            }
            1 => {
                // borrow another pointer's byte offset when it fits
                let (other, _) = *ptrs.choose(rng).unwrap();
                let (o2, off2) = aim[other];
                if other != ptr && off2 + width <= objects[o2].1 {
                    src.push_str(&format!("{ptr} = {other};\n"));
                    aim.insert(ptr, (o2, off2));
                }
            }
            2 if off + width <= size => src.push_str(&format!("*{ptr} = newSymbolic;\n")),
            3 | 4 if off + width <= size => {
                let v: i64 = rng.gen_range(-300..=300);
                src.push_str(&format!("*{ptr} = {v};\n"));
            }
            5 => {
                let g = ["g0", "g1"].choose(rng).unwrap();
                let v: i64 = rng.gen_range(-70000..=70000);
                if rng.gen_bool(0.5) {
                    src.push_str(&format!("{g} = {v};\n"));
                } else {
                    src.push_str(&format!("{g} = newSymbolic;\n"));
                }
            }
            _ if off + width <= size => {
                let r = results.choose(rng).unwrap();
                let extra = rng.gen_range(-2..=2);
                src.push_str(&format!("{r} = *{ptr} + {extra};\n"));
            }
            _ => {}
        }
    }
    src.push_str("t: skip;\n");
    src
}
