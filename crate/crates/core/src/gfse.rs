//! Forward symbolic execution, optionally guided by replay values, and the
//! two-stage targeted driver built on top of it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::cfg::{Cfg, Flow};
use crate::driver::{run_mpbse, MpbseConfig, MpbseResult, ReplayMap};
use crate::expr::{object_at, sext, BinaryOp, Expr, ExprKind, ObjectNames, ObjectRef};
use crate::forward::{merge_errors, ErrorKind, MemoryError};
use crate::lang::{BinOp, Exp, ExpKind, NodeKind, Program, StmtId, Type, UnOp};
use crate::mem::ByteStore;
use crate::solver::{SatResult, Solver, SolverStats};

#[derive(Clone, Debug)]
pub struct GfseConfig {
    pub target: StmtId,
    /// Start statement; the program start when unset.
    pub entry: Option<StmtId>,
    /// Cap on states created (one per path).
    pub max_paths: u32,
    /// Cap on statements executed along one path.
    pub max_steps: usize,
    pub deadline: Option<Duration>,
    pub solver_timeout: Duration,
}

impl GfseConfig {
    pub fn new(target: StmtId) -> GfseConfig {
        GfseConfig {
            target,
            entry: None,
            max_paths: 100_000,
            max_steps: 100_000,
            deadline: None,
            solver_timeout: Duration::from_secs(5),
        }
    }
}

/// Inputs that drive one execution to the target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TestCase {
    /// (statement location, symbol name, value) in execution order.
    pub inputs: Vec<(String, String, i64)>,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct GfseStats {
    /// States created, including the initial one.
    pub paths: u32,
    pub completed: u32,
    pub steps: u64,
    pub solver: SolverStats,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GfseResult {
    pub reachable: bool,
    /// False when a cap or deadline stopped the search early.
    pub complete: bool,
    pub errors: Vec<MemoryError>,
    pub tests: Vec<TestCase>,
    pub stats: GfseStats,
}

#[derive(Clone, Debug)]
struct Obj {
    store: ByteStore,
    size: u64,
    /// Step index of the free.
    freed: Option<usize>,
    /// Allocating statement and step index.
    birth: Option<(StmtId, usize)>,
}

#[derive(Clone, Debug)]
struct FState {
    pc: Option<StmtId>,
    objs: BTreeMap<ObjectRef, Obj>,
    path: Vec<Expr>,
    next_sym: u32,
    next_heap: u32,
    /// Value written by each executed `newSymbolic`: a symbol, or the
    /// replayed constant.
    inputs: Vec<(StmtId, Expr)>,
    steps: usize,
}

impl FState {
    fn initial(p: &Program, entry: Option<StmtId>) -> FState {
        let mut objs = BTreeMap::new();
        for (i, g) in p.globals.iter().enumerate() {
            let size = p.size_of(&g.ty);
            let mut store = ByteStore::new(size as usize);
            if let Some(v) = g.init {
                store.write(0, size.min(8) as usize, &Expr::constant(v));
            }
            objs.insert(ObjectRef::Global(i as u32), Obj { store, size, freed: None, birth: None });
        }
        FState { pc: entry, objs, path: Vec::new(), next_sym: 1, next_heap: 1, inputs: Vec::new(), steps: 0 }
    }
}

/// Location inside an object; the offset may be symbolic.
#[derive(Clone, Debug)]
struct Loc {
    obj: ObjectRef,
    off: Expr,
}

/// Statement execution needs the state split on these constraints first.
struct Split(Vec<Expr>);

type Ex<T> = Result<T, Split>;

struct Exec<'a> {
    p: &'a Program,
    solver: &'a mut Solver,
    st: &'a mut FState,
    errors: &'a mut BTreeSet<MemoryError>,
    stmt: StmtId,
}

fn sat(solver: &mut Solver, path: &[Expr], extra: &Expr) -> bool {
    let mut cs = path.to_vec();
    cs.push(extra.clone());
    // unknown counts as feasible
    !matches!(solver.check(&cs), SatResult::Unsat)
}

impl Exec<'_> {
    fn error(&mut self, kind: ErrorKind, obj: ObjectRef, earlier: Option<usize>, detail: String) {
        let now = self.st.steps - 1;
        self.errors.insert(MemoryError {
            kind,
            stmt: self.stmt,
            location: self.p.location(self.stmt),
            detail,
            object: self.name(obj),
            steps: earlier.into_iter().chain([now]).collect(),
        });
    }

    fn name(&self, o: ObjectRef) -> String {
        let names: &dyn ObjectNames = self.p;
        names.object_name(o)
    }

    fn loc_of(&mut self, v: &Expr) -> Loc {
        let v = v.simplify();
        if let ExprKind::AddrOf { obj, offset } = v.kind() {
            return Loc { obj: *obj, off: offset.clone() };
        }
        if let Some(n) = v.as_number() {
            let (obj, off) = object_at(n);
            return Loc { obj, off: Expr::constant(off) };
        }
        // pointer built from symbolic arithmetic: pin it to one model value
        let n = self.model_value(&v);
        self.st.path.push(Expr::eq(v, Expr::constant(n)));
        let (obj, off) = object_at(n);
        Loc { obj, off: Expr::constant(off) }
    }

    /// Concrete byte offset for an access, or `None` when the access must
    /// be skipped after reporting an error.
    fn locate(&mut self, loc: &Loc, width: u64, write: bool) -> Ex<Option<(ObjectRef, usize)>> {
        let verb = if write { "write" } else { "read" };
        if loc.obj == ObjectRef::Null {
            self.error(ErrorKind::NullDereference, loc.obj, None, format!("{verb} of {width} bytes through NULL"));
            return Ok(None);
        }
        let Some(info) = self.st.objs.get(&loc.obj) else {
            return Ok(None);
        };
        let size = info.size as i64;
        let freed = info.freed;
        let off = match loc.off.simplify().as_const() {
            Some(k) => k,
            None => self.fix_offset(&loc.off, size, width)?,
        };
        if off < 0 || off + width as i64 > size {
            let name = self.name(loc.obj);
            self.error(
                ErrorKind::OutOfBounds,
                loc.obj,
                None,
                format!("{verb} of {width} bytes at offset {off} of {name} ({size} bytes)"),
            );
            return Ok(None);
        }
        if freed.is_some() {
            let name = self.name(loc.obj);
            self.error(ErrorKind::UseAfterFree, loc.obj, freed, format!("{verb} of freed {name}"));
        }
        Ok(Some((loc.obj, off as usize)))
    }

    /// Symbolic offset: split into in-bounds values and the out-of-bounds
    /// remainder, or return the single value the path allows.
    fn fix_offset(&mut self, off: &Expr, size: i64, width: u64) -> Ex<i64> {
        let hi = size - width as i64;
        let inside = Expr::binary(
            BinaryOp::LAnd,
            Expr::binary(BinaryOp::Ge, off.clone(), Expr::constant(0)),
            Expr::binary(BinaryOp::Le, off.clone(), Expr::constant(hi)),
        );
        let outside = Expr::not(inside.clone());
        let can_in = hi >= 0 && sat(self.solver, &self.st.path, &inside);
        let can_out = sat(self.solver, &self.st.path, &outside);
        if can_in && can_out {
            return Err(Split(vec![inside, outside]));
        }
        if !can_in {
            return Ok(self.model_value(off));
        }
        let mut values = Vec::new();
        for k in 0..=hi {
            let c = Expr::eq(off.clone(), Expr::constant(k));
            if sat(self.solver, &self.st.path, &c) {
                values.push(c);
            }
        }
        if values.len() == 1 {
            let ExprKind::Binary(_, _, k) = values[0].kind() else { unreachable!() };
            return Ok(k.as_const().expect("constant offset"));
        }
        Err(Split(values))
    }

    fn model_value(&mut self, v: &Expr) -> i64 {
        let m = match self.solver.check(&self.st.path) {
            SatResult::Sat(m) => m,
            _ => BTreeMap::new(),
        };
        let full: BTreeMap<u32, i64> = (1..self.st.next_sym).map(|id| (id, m.get(&id).copied().unwrap_or(0))).collect();
        v.eval(&full).unwrap_or(0)
    }

    fn read(&mut self, loc: &Loc, width: u64) -> Ex<Expr> {
        Ok(match self.locate(loc, width, false)? {
            Some((o, k)) => self.st.objs[&o].store.read(k, width as usize),
            None => Expr::constant(0),
        })
    }

    fn write(&mut self, loc: &Loc, width: u64, v: &Expr) -> Ex<()> {
        if let Some((o, k)) = self.locate(loc, width, true)? {
            let obj = self.st.objs.get_mut(&o).expect("located object");
            obj.store.write(k, width as usize, v);
        }
        Ok(())
    }

    fn lvaddr(&mut self, e: &Exp) -> Ex<Loc> {
        Ok(match &e.kind {
            ExpKind::Var(g) => Loc { obj: ObjectRef::Global(g.0), off: Expr::constant(0) },
            ExpKind::Deref(pe) => {
                let v = self.eval(pe)?;
                self.loc_of(&v)
            }
            ExpKind::Arrow(pe, f) => {
                let v = self.eval(pe)?;
                let l = self.loc_of(&v);
                Loc { obj: l.obj, off: Expr::add(l.off, Expr::constant(f.offset as i64)).simplify() }
            }
            ExpKind::Index(base, idx) => {
                let es = self.p.size_of(&e.ty) as i64;
                let l = match base.ty {
                    Type::Array(..) => self.lvaddr(base)?,
                    _ => {
                        let v = self.eval(base)?;
                        self.loc_of(&v)
                    }
                };
                let i = self.eval(idx)?;
                Loc { obj: l.obj, off: Expr::add(l.off, Expr::mul(Expr::constant(es), i)).simplify() }
            }
            _ => Loc { obj: ObjectRef::Null, off: Expr::constant(0) },
        })
    }

    fn eval(&mut self, e: &Exp) -> Ex<Expr> {
        Ok(match &e.kind {
            ExpKind::Const(v) => Expr::constant(*v),
            ExpKind::Null => Expr::constant(0),
            ExpKind::AddrOf(lv) => {
                let l = self.lvaddr(lv)?;
                Expr::addr(l.obj, l.off)
            }
            ExpKind::Unary(op, a) => {
                let v = self.eval(a)?;
                let op = match op {
                    UnOp::Neg => crate::expr::UnaryOp::Neg,
                    UnOp::Not => crate::expr::UnaryOp::Not,
                };
                Expr::unary(op, v).simplify()
            }
            ExpKind::Binary(op @ (BinOp::Add | BinOp::Sub), l, r) if e.ty.is_ptr() => {
                let es = e.ty.pointee().map(|t| self.p.size_of(t)).unwrap_or(1) as i64;
                let base = self.eval(l)?;
                let i = self.eval(r)?;
                let mut delta = Expr::mul(Expr::constant(es), i);
                if *op == BinOp::Sub {
                    delta = Expr::unary(crate::expr::UnaryOp::Neg, delta);
                }
                match base.simplify().kind() {
                    ExprKind::AddrOf { obj, offset } => Expr::addr(*obj, Expr::add(offset.clone(), delta).simplify()),
                    _ => Expr::add(base, delta).simplify(),
                }
            }
            ExpKind::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                Expr::binary(BinaryOp::from_source(*op), a, b).simplify()
            }
            _ if e.is_lvalue() => {
                let l = self.lvaddr(e)?;
                let w = self.p.size_of(&e.ty);
                self.read(&l, w)?
            }
            _ => Expr::constant(0),
        })
    }

    fn condition(&mut self, cond: &Exp) -> Ex<Expr> {
        let v = self.eval(cond)?;
        Ok(Expr::binary(BinaryOp::Ne, v, Expr::constant(0)).simplify())
    }
}

enum Outcome {
    /// Continue at the given statement (or program end).
    Next(Option<StmtId>, FState),
    /// Feasible branch directions, each with its condition.
    Fork(Vec<(Expr, Option<StmtId>)>, FState),
    /// Re-run the statement once per added constraint.
    SplitOn(Vec<Expr>, FState),
    Stop,
}

enum Ctl {
    Fall,
    Branch(Vec<(Expr, Option<StmtId>)>),
    Stop,
}

fn step(
    p: &Program,
    cfg: &Cfg,
    solver: &mut Solver,
    errors: &mut BTreeSet<MemoryError>,
    replay: &ReplayMap,
    mut st: FState,
) -> Outcome {
    let id = st.pc.expect("running state");
    let snapshot = st.clone();
    let mut ex = Exec { p, solver, st: &mut st, errors, stmt: id };
    let r = exec_node(&mut ex, cfg, replay);
    match r {
        Err(Split(cs)) => Outcome::SplitOn(cs, snapshot),
        Ok(Ctl::Branch(dirs)) => Outcome::Fork(dirs, st),
        Ok(Ctl::Stop) => Outcome::Stop,
        Ok(Ctl::Fall) => {
            let next = match cfg.flow(id) {
                Flow::Next(n) => n,
                _ => None,
            };
            Outcome::Next(next, st)
        }
    }
}

fn exec_node(ex: &mut Exec, cfg: &Cfg, replay: &ReplayMap) -> Ex<Ctl> {
    let p = ex.p;
    let id = ex.stmt;
    match &p.node(id).kind {
        NodeKind::AssignSymbolic { lhs } => {
            let w = p.size_of(&lhs.ty);
            let v = match replay.get(&id) {
                Some(v) => Expr::constant(sext(*v, w as u8)),
                None => {
                    let n = ex.st.next_sym;
                    ex.st.next_sym += 1;
                    Expr::sym(n, w as u8, id)
                }
            };
            ex.st.inputs.push((id, v.clone()));
            let l = ex.lvaddr(lhs)?;
            ex.write(&l, w, &v)?;
        }
        NodeKind::Assign { lhs, rhs } => {
            let v = ex.eval(rhs)?;
            let l = ex.lvaddr(lhs)?;
            let w = p.size_of(&lhs.ty);
            ex.write(&l, w, &v)?;
        }
        NodeKind::Malloc { lhs, size } => {
            let l = ex.lvaddr(lhs)?;
            let h = ObjectRef::Heap(ex.st.next_heap);
            ex.st.next_heap += 1;
            let birth = Some((id, ex.st.steps - 1));
            let obj = Obj { store: ByteStore::new(*size as usize), size: *size, freed: None, birth };
            ex.st.objs.insert(h, obj);
            ex.write(&l, 8, &Expr::addr(h, Expr::constant(0)))?;
        }
        NodeKind::Free { arg } => {
            let v = ex.eval(arg)?;
            let l = ex.loc_of(&v);
            let name = ex.name(l.obj);
            match l.obj {
                ObjectRef::Null => ex.error(ErrorKind::InvalidFree, l.obj, None, "free of NULL".into()),
                ObjectRef::Global(_) => {
                    ex.error(ErrorKind::InvalidFree, l.obj, None, format!("free of global {name}"))
                }
                _ => {
                    let off = l.off.simplify().as_const();
                    let freed = ex.st.objs.get(&l.obj).and_then(|o| o.freed);
                    let now = ex.st.steps - 1;
                    if freed.is_some() {
                        ex.error(ErrorKind::DoubleFree, l.obj, freed, format!("{name} freed twice"));
                    } else if off != Some(0) {
                        let detail = format!("free of {name} at a non-zero offset");
                        ex.error(ErrorKind::InvalidFree, l.obj, None, detail);
                    } else if let Some(o) = ex.st.objs.get_mut(&l.obj) {
                        o.freed = Some(now);
                    }
                }
            }
        }
        NodeKind::If { cond, .. } | NodeKind::While { cond } => {
            let c = ex.condition(cond)?;
            let Flow::Branch { on_true, on_false } = cfg.flow(id) else {
                unreachable!("branch node without branch flow")
            };
            return Ok(Ctl::Branch(branch(ex.solver, &ex.st.path, c, on_true, on_false)));
        }
        NodeKind::Abort => return Ok(Ctl::Stop),
        NodeKind::Else { .. } | NodeKind::Skip => {}
    }
    Ok(Ctl::Fall)
}

fn branch(
    solver: &mut Solver,
    path: &[Expr],
    c: Expr,
    on_true: Option<StmtId>,
    on_false: Option<StmtId>,
) -> Vec<(Expr, Option<StmtId>)> {
    if c.is_true() {
        return vec![(Expr::truth(), on_true)];
    }
    if c.is_false() {
        return vec![(Expr::truth(), on_false)];
    }
    let neg = Expr::not(c.clone()).simplify();
    let mut dirs = Vec::new();
    if sat(solver, path, &c) {
        dirs.push((c, on_true));
    }
    if sat(solver, path, &neg) {
        dirs.push((neg, on_false));
    }
    dirs
}

/// Heap objects that are live but unreachable from the globals.
fn leaks(p: &Program, st: &FState) -> Vec<MemoryError> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<ObjectRef> = (0..p.globals.len()).map(|g| ObjectRef::Global(g as u32)).collect();
    while let Some(o) = queue.pop_front() {
        if !seen.insert(o) {
            continue;
        }
        let Some(obj) = st.objs.get(&o) else { continue };
        for k in 0..obj.store.len() {
            if !obj.store.is_written(k) {
                continue;
            }
            let v = obj.store.read(k, 8);
            let target = match v.kind() {
                ExprKind::AddrOf { obj, .. } => Some(*obj),
                _ => v.as_number().map(|n| object_at(n).0),
            };
            if let Some(t) = target {
                if t.is_heap() && !seen.contains(&t) {
                    queue.push_back(t);
                }
            }
        }
    }
    let names: &dyn ObjectNames = p;
    st.objs
        .iter()
        .filter(|(o, info)| o.is_heap() && info.freed.is_none() && !seen.contains(o))
        .filter_map(|(o, info)| {
            let (stmt, at) = info.birth?;
            Some(MemoryError {
                kind: ErrorKind::MemoryLeak,
                stmt,
                location: p.location(stmt),
                detail: format!("{} ({} bytes) is unreachable", names.object_name(*o), info.size),
                object: names.object_name(*o),
                steps: vec![at],
            })
        })
        .collect()
}

/// Breadth-first forward symbolic execution from the program start,
/// stopping at the first state that reaches the target.
pub fn run_gfse(p: &Program, cfg: &Cfg, config: &GfseConfig, replay: &ReplayMap) -> GfseResult {
    let start = Instant::now();
    let mut solver = Solver::new(config.solver_timeout);
    let mut errors = BTreeSet::new();
    let mut stats = GfseStats { paths: 1, ..GfseStats::default() };
    let mut tests = Vec::new();
    let mut reachable = false;
    let mut complete = true;
    let mut queue = VecDeque::from([FState::initial(p, config.entry.or(cfg.entry()))]);
    while let Some(mut st) = queue.pop_front() {
        if config.deadline.is_some_and(|d| start.elapsed() > d) {
            complete = false;
            break;
        }
        let Some(pc) = st.pc else {
            stats.completed += 1;
            continue;
        };
        if pc == config.target {
            reachable = true;
            errors.extend(leaks(p, &st));
            let model = match solver.check(&st.path) {
                SatResult::Sat(m) => m,
                _ => BTreeMap::new(),
            };
            let model: BTreeMap<u32, i64> = (1..st.next_sym).map(|id| (id, model.get(&id).copied().unwrap_or(0))).collect();
            let inputs = st
                .inputs
                .iter()
                .map(|(s, v)| {
                    let name = match v.kind() {
                        ExprKind::Sym { id, .. } => format!("s{id}"),
                        _ => "replayed".to_string(),
                    };
                    (p.location(*s), name, v.eval(&model).unwrap_or(0))
                })
                .collect();
            tests.push(TestCase { inputs });
            break;
        }
        if st.steps >= config.max_steps {
            complete = false;
            continue;
        }
        st.steps += 1;
        stats.steps += 1;
        match step(p, cfg, &mut solver, &mut errors, replay, st) {
            Outcome::Next(n, mut s) => {
                s.pc = n;
                queue.push_back(s);
            }
            Outcome::Fork(dirs, s) => {
                spawn(&mut queue, &mut stats, &mut complete, config, s, dirs, false);
            }
            Outcome::SplitOn(cs, s) => {
                let here = s.pc;
                let children = cs.into_iter().map(|c| (c, here)).collect();
                spawn(&mut queue, &mut stats, &mut complete, config, s, children, true);
            }
            Outcome::Stop => stats.completed += 1,
        }
    }
    stats.solver = solver.stats;
    stats.wall_ms = start.elapsed().as_millis() as u64;
    let mut merged = Vec::new();
    merge_errors(&mut merged, errors);
    GfseResult { reachable, complete, errors: merged, tests, stats }
}

/// Queue one child per constraint. Children past the first count as new paths.
fn spawn(
    queue: &mut VecDeque<FState>,
    stats: &mut GfseStats,
    complete: &mut bool,
    config: &GfseConfig,
    parent: FState,
    children: Vec<(Expr, Option<StmtId>)>,
    rerun: bool,
) {
    let n = children.len();
    for (i, (c, next)) in children.into_iter().enumerate() {
        if i > 0 {
            if stats.paths >= config.max_paths {
                *complete = false;
                break;
            }
            stats.paths += 1;
        }
        let mut s = parent.clone();
        if rerun {
            s.steps -= 1;
        }
        if !c.is_true() {
            s.path.push(c);
        }
        s.pc = next;
        queue.push_back(s);
    }
    if n == 0 {
        stats.completed += 1;
    }
}

/// Which stage established reachability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Mpbse,
    Gfse,
}

#[derive(Clone, Debug, Serialize)]
pub struct TseResult {
    pub reachable: bool,
    pub stage: Option<Stage>,
    pub errors: Vec<MemoryError>,
    pub mpbse: MpbseResult,
    pub gfse: Option<GfseResult>,
}

/// Backward search first; if it cannot reach the target, forward execution
/// guided by the replay values it collected.
pub fn run_tse(p: &Program, cfg: &Cfg, mpbse: &MpbseConfig, gfse: &GfseConfig, fse_step: bool) -> TseResult {
    let m = run_mpbse(p, cfg, mpbse);
    let mut errors = m.errors.clone();
    let mut stage = m.reachable.then_some(Stage::Mpbse);
    let mut g = None;
    if !m.reachable && fse_step {
        let r = run_gfse(p, cfg, gfse, &m.replay);
        if r.reachable {
            stage = Some(Stage::Gfse);
        }
        merge_errors(&mut errors, r.errors.iter().cloned());
        g = Some(r);
    }
    TseResult { reachable: stage.is_some(), stage, errors, mpbse: m, gfse: g }
}
