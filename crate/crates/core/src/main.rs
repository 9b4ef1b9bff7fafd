use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};

use tse_core::backward::Limits;
use tse_core::cfg::build_cfg;
use tse_core::driver::{run_mpbse, EvalScheme, MpbseConfig, ReplayMap};
use tse_core::gfse::{run_gfse, run_tse, GfseConfig};
use tse_core::lang::{parse_program, LangError};
use tse_core::report::{render_trace, ConfigEcho, Mode, RunReport};
use tse_core::solver::export_smtlib;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Tse,
    Mpbse,
    Dse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Targeted symbolic execution: can the target statement be reached, and
/// which memory errors lie on the way?
#[derive(Debug, Parser)]
#[command(name = "tse", version)]
struct Cli {
    /// Program source file.
    #[arg(long)]
    program: PathBuf,
    /// Target statement: a label, `file:line`, or a line number.
    #[arg(long)]
    target: String,
    /// Entry statement; defaults to the first statement.
    #[arg(long)]
    entry: Option<String>,
    #[arg(long, value_enum, default_value = "tse")]
    mode: ModeArg,
    /// Total number of backward paths.
    #[arg(long)]
    fork_limit: Option<u32>,
    /// Times one in-cycle edge may be taken per path.
    #[arg(long, default_value_t = 1)]
    edge_limit: u32,
    /// Longest backward path, in statements.
    #[arg(long, default_value_t = 512)]
    path_limit: usize,
    /// `unification` or `periodic:N`.
    #[arg(long, default_value = "unification", value_parser = parse_scheme)]
    eval_scheme: EvalScheme,
    /// Run guided forward execution when the backward search fails.
    #[arg(long, value_enum, default_value = "on")]
    fse_step: Switch,
    /// Wall-clock budget per stage, in seconds.
    #[arg(long)]
    deadline: Option<f64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the backward step table here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the recorded solver queries as SMT-LIB2 here.
    #[arg(long)]
    smtlib_out: Option<PathBuf>,
    /// Keep exploring after the first feasible path.
    #[arg(long)]
    exhaustive: bool,
    /// Zero all timing fields in the report.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value_t = 1)]
    workers: u32,
}

fn parse_scheme(s: &str) -> Result<EvalScheme, String> {
    match s.split_once(':') {
        None if s == "unification" => Ok(EvalScheme::Unification),
        None if s == "periodic" => Ok(EvalScheme::Periodic(8)),
        Some(("periodic", n)) => match n.parse::<u32>() {
            Ok(n) if n > 0 => Ok(EvalScheme::Periodic(n)),
            _ => Err(format!("bad period `{n}`")),
        },
        _ => Err(format!("expected `unification` or `periodic:N`, got `{s}`")),
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Parse { path: String, source: LangError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } => 1,
            CliError::Io { .. } => 2,
        }
    }
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let path = cli.program.display().to_string();
    let src = std::fs::read_to_string(&cli.program)
        .map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?;
    let p = parse_program(&src).map_err(|source| CliError::Parse { path: path.clone(), source })?;
    let cfg = build_cfg(&p);
    let resolve = |loc: &str| p.resolve_location(loc).map_err(|source| CliError::Parse { path: path.clone(), source });
    let target = resolve(&cli.target)?;
    let entry = match &cli.entry {
        Some(e) => resolve(e)?,
        None => cfg.entry().ok_or_else(|| CliError::Usage(format!("{path}: program has no statements")))?,
    };
    let deadline = cli.deadline.map(Duration::from_secs_f64);

    let mut m = MpbseConfig::new(target, entry);
    m.limits = Limits { edge: cli.edge_limit, fork: cli.fork_limit.unwrap_or(u32::MAX), path: cli.path_limit };
    m.eval_scheme = cli.eval_scheme;
    m.deadline = deadline;
    m.exhaustive = cli.exhaustive;
    m.trace = cli.trace.is_some();
    let mut g = GfseConfig::new(target);
    g.entry = Some(entry);
    g.deadline = deadline;

    let mode = match cli.mode {
        ModeArg::Tse => Mode::Tse,
        ModeArg::Mpbse => Mode::Mpbse,
        ModeArg::Dse => Mode::Dse,
    };
    let echo = ConfigEcho {
        program: path.clone(),
        target: cli.target.clone(),
        entry: p.location(entry),
        fork_limit: cli.fork_limit,
        edge_limit: cli.edge_limit,
        path_limit: cli.path_limit,
        eval_scheme: match cli.eval_scheme {
            EvalScheme::Unification => "unification".into(),
            EvalScheme::Periodic(n) => format!("periodic:{n}"),
        },
        fse_step: cli.fse_step == Switch::On,
        deadline_secs: cli.deadline,
        exhaustive: cli.exhaustive,
        deterministic: cli.deterministic,
        workers: cli.workers,
    };
    let with_trace = cli.trace.is_some();
    let (mut report, mpbse) = match mode {
        Mode::Tse => {
            let r = run_tse(&p, &cfg, &m, &g, cli.fse_step == Switch::On);
            let rep = RunReport::new(&p, mode, echo, Some(&r.mpbse), r.gfse.as_ref(), r.errors.clone(), with_trace);
            (rep, Some(r.mpbse))
        }
        Mode::Mpbse => {
            let r = run_mpbse(&p, &cfg, &m);
            (RunReport::new(&p, mode, echo, Some(&r), None, r.errors.clone(), with_trace), Some(r))
        }
        Mode::Dse => {
            let r = run_gfse(&p, &cfg, &g, &ReplayMap::new());
            (RunReport::new(&p, mode, echo, None, Some(&r), r.errors.clone(), with_trace), None)
        }
    };
    if cli.deterministic {
        report.zero_times();
    }
    if let Some(t) = &cli.trace {
        let rows = mpbse.as_ref().and_then(|r| r.trace.as_deref()).unwrap_or(&[]);
        write_file(t, &render_trace(rows))?;
    }
    if let Some(out) = &cli.smtlib_out {
        let queries = mpbse.as_ref().map(|r| r.queries.as_slice()).unwrap_or(&[]);
        let text: Vec<String> = queries.iter().map(|q| export_smtlib(q)).collect();
        write_file(out, &text.join("(reset)\n"))?;
    }
    Ok(match cli.format {
        Format::Json => report.to_json(),
        Format::Text => report.to_text(),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(out)) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(2)
        }
    }
}
