//! Run reports: the versioned JSON document, its text rendering, and the
//! step-table trace dump.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::driver::{MpbseResult, MpbseStats, PathRecord};
use crate::forward::MemoryError;
use crate::gfse::{GfseResult, GfseStats, Stage, TestCase};
use crate::lang::Program;
use crate::mem::TraceRow;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tse,
    Mpbse,
    Dse,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Tse => "tse",
            Mode::Mpbse => "mpbse",
            Mode::Dse => "dse",
        }
    }
}

/// Settings the run used, echoed back.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub program: String,
    pub target: String,
    pub entry: String,
    pub fork_limit: Option<u32>,
    pub edge_limit: u32,
    pub path_limit: usize,
    pub eval_scheme: String,
    pub fse_step: bool,
    pub deadline_secs: Option<f64>,
    pub exhaustive: bool,
    pub deterministic: bool,
    pub workers: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportStats {
    pub paths: u64,
    pub forks: u64,
    pub solver_queries: u64,
    pub wall_ms: u64,
    pub mpbse: Option<MpbseStats>,
    pub gfse: Option<GfseStats>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub version: u32,
    pub mode: Mode,
    pub config: ConfigEcho,
    pub reachable: bool,
    /// Stage that established reachability.
    pub stage: Option<Stage>,
    pub complete: bool,
    pub errors: Vec<MemoryError>,
    /// Statement location to input value.
    pub replay: BTreeMap<String, i64>,
    pub tests: Vec<TestCase>,
    pub paths: Vec<PathRecord>,
    pub stats: ReportStats,
    pub trace: Option<Vec<TraceRow>>,
}

impl RunReport {
    /// Assemble a report from whichever stages ran.
    pub fn new(
        p: &Program,
        mode: Mode,
        config: ConfigEcho,
        mpbse: Option<&MpbseResult>,
        gfse: Option<&GfseResult>,
        errors: Vec<MemoryError>,
        with_trace: bool,
    ) -> RunReport {
        let stage = if mpbse.is_some_and(|m| m.reachable) {
            Some(Stage::Mpbse)
        } else if gfse.is_some_and(|g| g.reachable) {
            Some(Stage::Gfse)
        } else {
            None
        };
        let complete = match stage {
            Some(_) => true,
            None => mpbse.is_none_or(|m| m.complete) && gfse.is_none_or(|g| g.complete),
        };
        let replay = mpbse
            .map(|m| m.replay.iter().map(|(s, v)| (p.location(*s), *v)).collect())
            .unwrap_or_default();
        let mut stats = ReportStats { paths: 0, forks: 0, solver_queries: 0, wall_ms: 0, mpbse: None, gfse: None };
        if let Some(m) = mpbse {
            let n = u64::from(m.stats.paths_explored);
            stats.paths += n;
            stats.forks += n.saturating_sub(1);
            stats.solver_queries += m.stats.solver.queries;
            stats.wall_ms += m.stats.wall_ms;
            stats.mpbse = Some(m.stats);
        }
        if let Some(g) = gfse {
            let n = u64::from(g.stats.paths);
            stats.paths += n;
            stats.forks += n.saturating_sub(1);
            stats.solver_queries += g.stats.solver.queries;
            stats.wall_ms += g.stats.wall_ms;
            stats.gfse = Some(g.stats);
        }
        RunReport {
            version: REPORT_VERSION,
            mode,
            config,
            reachable: stage.is_some(),
            stage,
            complete,
            errors,
            replay,
            tests: gfse.map(|g| g.tests.clone()).unwrap_or_default(),
            paths: mpbse.map(|m| m.paths.clone()).unwrap_or_default(),
            stats,
            trace: if with_trace { mpbse.and_then(|m| m.trace.clone()) } else { None },
        }
    }

    /// Zero every wall-clock field so identical runs serialize identically.
    pub fn zero_times(&mut self) {
        self.stats.wall_ms = 0;
        if let Some(m) = &mut self.stats.mpbse {
            m.wall_ms = 0;
            m.solver.time_ms = 0;
        }
        if let Some(g) = &mut self.stats.gfse {
            g.wall_ms = 0;
            g.solver.time_ms = 0;
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let yes = |b: bool| if b { "yes" } else { "no" };
        writeln!(out, "mode: {}", self.mode.name()).unwrap();
        writeln!(out, "program: {}", self.config.program).unwrap();
        writeln!(out, "target: {}", self.config.target).unwrap();
        match self.stage {
            Some(Stage::Mpbse) => writeln!(out, "reachable: yes (backward search)").unwrap(),
            Some(Stage::Gfse) => writeln!(out, "reachable: yes (forward execution)").unwrap(),
            None => writeln!(out, "reachable: no").unwrap(),
        }
        writeln!(out, "complete: {}", yes(self.complete)).unwrap();
        if !self.replay.is_empty() {
            writeln!(out, "replay:").unwrap();
            for (loc, v) in &self.replay {
                writeln!(out, "  {loc} = {v}").unwrap();
            }
        }
        writeln!(out, "errors: {}", self.errors.len()).unwrap();
        for e in &self.errors {
            writeln!(out, "  {e}").unwrap();
        }
        for (i, t) in self.tests.iter().enumerate() {
            let inputs: Vec<String> = t.inputs.iter().map(|(loc, s, v)| format!("{s}@{loc} = {v}")).collect();
            writeln!(out, "test {}: {}", i + 1, inputs.join(", ")).unwrap();
        }
        for (i, path) in self.paths.iter().enumerate() {
            let verdict = match path.verdict {
                crate::driver::PathVerdict::Feasible => "feasible",
                crate::driver::PathVerdict::Infeasible => "infeasible",
                crate::driver::PathVerdict::Unknown => "unknown",
            };
            writeln!(out, "path {}: {verdict}, {} statements", i + 1, path.statements.len()).unwrap();
            for c in &path.constraints {
                writeln!(out, "  {c}").unwrap();
            }
        }
        let s = &self.stats;
        writeln!(
            out,
            "stats: paths {}, forks {}, solver queries {}, wall {} ms",
            s.paths, s.forks, s.solver_queries, s.wall_ms
        )
        .unwrap();
        out
    }
}

/// Step table, one line per step:
/// `step | statement | G | A | H | Phi | u/w/c | U`.
pub fn render_trace(rows: &[TraceRow]) -> String {
    let cell = |v: &[String]| if v.is_empty() { "-".to_string() } else { v.join(", ") };
    let mut out = String::from("step | statement | G | A | H | Phi | u/w/c | U\n");
    for r in rows {
        let effect = if r.effect.is_empty() { "-" } else { &r.effect };
        writeln!(
            out,
            "{} | {} | {} | {} | {} | {} | {} | {}",
            r.step,
            r.what,
            cell(&r.globals),
            cell(&r.abstracts),
            cell(&r.heap),
            cell(&r.phi),
            effect,
            cell(&r.unif)
        )
        .unwrap();
    }
    out
}
