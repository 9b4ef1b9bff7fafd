//! The backward exploration loop: depth-first over backward paths, with
//! forward passes that prune paths and collect replay values.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::backward::{execute_backward, ForkBudget, Limits};
use crate::cfg::Cfg;
use crate::expr::Expr;
use crate::forward::{complete_model, merge_errors, MemoryError, PathView, ReplayInput};
use crate::lang::{Program, StmtId};
use crate::mem::{BackwardState, TraceRow};
use crate::solver::{SatResult, Solver, SolverStats};

/// When forward passes run on open paths. Paths reaching the entry are
/// always checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EvalScheme {
    /// After statements that added a unification pair.
    Unification,
    /// Every `n` executed statements.
    Periodic(u32),
}

#[derive(Clone, Debug)]
pub struct MpbseConfig {
    pub target: StmtId,
    pub entry: StmtId,
    pub limits: Limits,
    pub eval_scheme: EvalScheme,
    pub solver_timeout: Duration,
    pub max_states: Option<u64>,
    pub deadline: Option<Duration>,
    /// Keep exploring after the first feasible path.
    pub exhaustive: bool,
    pub trace: bool,
}

impl MpbseConfig {
    pub fn new(target: StmtId, entry: StmtId) -> MpbseConfig {
        MpbseConfig {
            target,
            entry,
            limits: Limits::default(),
            eval_scheme: EvalScheme::Unification,
            solver_timeout: Duration::from_secs(5),
            max_states: None,
            deadline: None,
            exhaustive: false,
            trace: false,
        }
    }
}

/// Concrete value for each `newSymbolic` statement.
pub type ReplayMap = BTreeMap<StmtId, i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathVerdict {
    Feasible,
    Infeasible,
    Unknown,
}

/// One backward path that reached a verdict.
#[derive(Clone, Debug, Serialize)]
pub struct PathRecord {
    pub verdict: PathVerdict,
    pub terminated: bool,
    /// Statement locations in forward order.
    pub statements: Vec<String>,
    /// Branch conditions after resolution, nearest to the target first.
    pub constraints: Vec<String>,
    pub model: BTreeMap<String, i64>,
    /// Inputs that drive a feasible path, first executed first.
    pub inputs: Vec<ReplayInput>,
    pub errors: Vec<MemoryError>,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct MpbseStats {
    pub paths_explored: u32,
    pub paths_pruned: u32,
    pub paths_terminated: u32,
    pub states_expanded: u64,
    pub forward_passes: u64,
    /// Paths cut by the path length limit or predecessors dropped by the
    /// edge and fork limits.
    pub limit_hits: u64,
    pub solver: SolverStats,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MpbseResult {
    pub reachable: bool,
    /// True when no path was cut by a limit, deadline or unknown verdict.
    pub complete: bool,
    pub errors: Vec<MemoryError>,
    #[serde(skip)]
    pub replay: ReplayMap,
    pub paths: Vec<PathRecord>,
    #[serde(skip)]
    pub trace: Option<Vec<TraceRow>>,
    /// Solver query of each entry in `paths`.
    #[serde(skip)]
    pub queries: Vec<Vec<Expr>>,
    pub stats: MpbseStats,
}

/// Solve one constraint on its own.
pub fn solve_one(solver: &mut Solver, c: &Expr) -> Option<BTreeMap<u32, i64>> {
    match solver.check(std::slice::from_ref(c)) {
        SatResult::Sat(m) => Some(m),
        _ => None,
    }
}

pub fn run_mpbse(p: &Program, cfg: &Cfg, config: &MpbseConfig) -> MpbseResult {
    let start = Instant::now();
    let mut solver = Solver::new(config.solver_timeout);
    let mut stats = MpbseStats::default();
    let mut budget = ForkBudget::default();
    let mut result = MpbseResult {
        reachable: false,
        complete: true,
        errors: Vec::new(),
        replay: ReplayMap::new(),
        paths: Vec::new(),
        trace: None,
        queries: Vec::new(),
        stats,
    };
    let mut witness_traced = false;
    let mut stack = vec![BackwardState::initial(p, config.target, config.trace)];
    'outer: while let Some(b) = stack.pop() {
        if config.deadline.is_some_and(|d| start.elapsed() > d)
            || config.max_states.is_some_and(|m| stats.states_expanded >= m)
        {
            result.complete = false;
            break;
        }
        if b.history.len() >= config.limits.path {
            stats.limit_hits += 1;
            result.complete = false;
            continue;
        }
        stats.states_expanded += 1;
        let succs = execute_backward(p, cfg, &b, &config.limits, &mut budget);
        if budget.limited {
            stats.limit_hits += 1;
            result.complete = false;
            budget.limited = false;
        }
        let mut kept = Vec::new();
        for mut s in succs {
            let terminated = s.pc == config.entry;
            let due = terminated
                || match config.eval_scheme {
                    EvalScheme::Unification => s.history.last().and_then(|h| h.rule).is_some_and(|r| r.unifies()),
                    EvalScheme::Periodic(n) => s.since_pass >= n.max(1),
                };
            if !due {
                kept.push(s);
                continue;
            }
            s.since_pass = 0;
            stats.forward_passes += 1;
            let mut view = PathView::new(p, &s, terminated);
            let outcome = view.constraints();
            let verdict = if outcome.consistent {
                solver.check(&outcome.constraints)
            } else {
                SatResult::Unsat
            };
            match verdict {
                SatResult::Unsat => {
                    stats.paths_pruned += 1;
                    for c in &outcome.constraints {
                        if let Some(m) = solve_one(&mut solver, c) {
                            for (sym, v) in m {
                                if let Some(origin) = s.symbols.get(&sym) {
                                    result.replay.entry(*origin).or_insert(v);
                                }
                            }
                        }
                    }
                    if terminated {
                        stats.paths_terminated += 1;
                    }
                    let rec = record(p, &s, &mut view, PathVerdict::Infeasible, terminated, None);
                    result.paths.push(rec);
                    result.queries.push(outcome.constraints.clone());
                    keep_trace(&mut result, &s);
                }
                SatResult::Sat(model) if terminated => {
                    stats.paths_terminated += 1;
                    result.reachable = true;
                    let model = complete_model(&s, &model);
                    let rec = record(p, &s, &mut view, PathVerdict::Feasible, true, Some(&model));
                    merge_errors(&mut result.errors, rec.errors.iter().cloned());
                    result.paths.push(rec);
                    result.queries.push(outcome.constraints.clone());
                    if !witness_traced {
                        witness_traced = true;
                        if let Some(t) = &s.trace {
                            result.trace = Some(t.rows.clone());
                        }
                    }
                    if !config.exhaustive {
                        break 'outer;
                    }
                }
                SatResult::Sat(_) => kept.push(s),
                SatResult::Unknown => {
                    result.complete = false;
                    if terminated {
                        stats.paths_terminated += 1;
                        let rec = record(p, &s, &mut view, PathVerdict::Unknown, true, None);
                        result.paths.push(rec);
                        result.queries.push(outcome.constraints.clone());
                        keep_trace(&mut result, &s);
                    } else {
                        kept.push(s);
                    }
                }
            }
        }
        // dead ends that never reach the entry are simply dropped
        stack.extend(kept.into_iter().rev());
    }
    stats.paths_explored = budget.paths_created;
    stats.solver = solver.stats;
    stats.wall_ms = start.elapsed().as_millis() as u64;
    result.stats = stats;
    result
}

fn keep_trace(result: &mut MpbseResult, s: &BackwardState) {
    if result.trace.is_none() {
        if let Some(t) = &s.trace {
            result.trace = Some(t.rows.clone());
        }
    }
}

fn record(
    p: &Program,
    s: &BackwardState,
    view: &mut PathView,
    verdict: PathVerdict,
    terminated: bool,
    model: Option<&BTreeMap<u32, i64>>,
) -> PathRecord {
    let statements = s.history.iter().rev().map(|h| p.location(h.stmt)).collect();
    let constraints = view
        .shown_constraints()
        .into_iter()
        .map(|(_, c)| match c {
            Some(c) => c.render(p),
            None => "unresolved".to_string(),
        })
        .collect();
    let (model_out, inputs, errors) = match model {
        Some(m) => {
            let named = m.iter().map(|(id, v)| (format!("s{id}"), *v)).collect();
            (named, view.replay(m), view.errors(m))
        }
        None => (BTreeMap::new(), Vec::new(), Vec::new()),
    };
    PathRecord { verdict, terminated, statements, constraints, model: model_out, inputs, errors }
}
