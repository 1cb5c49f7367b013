//! Command-line driver: parse, fixpoint, check, trace and oracle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lo_core::engine::{
    check_goal, extract_trace, fixpoint, monadize, monadize_fact, FixpointOptions, FixpointResult, Trace,
};
use lo_core::judgment::AsatOptions;
use lo_core::prover::{check_proof, Prover};
use lo_core::{parse_goal, parse_program, Fact, Goal, Program};
use serde::Serialize;
use thiserror::Error;

pub const EXIT_SAFE: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_VIOLATION: u8 = 2;
pub const EXIT_UNKNOWN: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "lo", version, about = "Bottom-up verifier for LO specifications")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a specification and print it back in canonical syntax.
    Parse(ParseArgs),
    /// Compute the reduced least fixpoint.
    Fixpoint(EngineArgs),
    /// Decide whether a goal is entailed by the fixpoint.
    Check(CheckArgs),
    /// Like `check`, always printing the replayed derivation.
    Trace(CheckArgs),
    /// Depth-bounded top-down proof search.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    pub file: PathBuf,
    /// Append the clauses of another file before the analysis.
    #[arg(long, value_name = "FILE")]
    pub strengthen: Vec<PathBuf>,
    #[arg(long, env = "LO_MAX_ROUNDS", default_value_t = 1000)]
    pub max_rounds: usize,
    /// Keep empty selections in the atom case.
    #[arg(long)]
    pub no_prune: bool,
    /// Feed only new facts to the atom cases.
    #[arg(long)]
    pub delta: bool,
    /// Fold constant argument positions into predicate names first.
    #[arg(long)]
    pub monadize: bool,
    /// Accepted for scripted runs; the engine is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub goal: String,
    #[arg(long)]
    pub trace: bool,
    /// Re-prove the trace with the top-down prover.
    #[arg(long)]
    pub validate: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub goal: String,
    #[arg(long, default_value_t = 12)]
    pub depth: usize,
    #[arg(long, value_name = "FILE")]
    pub strengthen: Vec<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Syntax { path: String, source: lo_core::syntax::SyntaxError },
    #[error("goal: {0}")]
    Goal(lo_core::syntax::SyntaxError),
    #[error("cannot monadize: {0}")]
    Monadize(String),
    #[error("trace: {0}")]
    Trace(#[from] lo_core::engine::TraceError),
    #[error("trace does not replay: {0}")]
    Replay(String),
}

/// What a command printed and the exit code it asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(code: u8, stdout: String) -> Outcome {
        Outcome { code, stdout, stderr: String::new() }
    }
}

#[derive(Debug, Serialize)]
pub struct FixpointReport {
    pub facts: Vec<Vec<String>>,
    pub rounds: usize,
    pub terminated: bool,
    pub monadic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Serialize)]
pub struct TraceEntry {
    pub clause: String,
    pub configuration: Vec<String>,
    pub subst: String,
}

pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_SAFE };
            let text = e.render().to_string();
            if e.use_stderr() {
                Outcome { code, stdout: String::new(), stderr: text }
            } else {
                Outcome::ok(code, text)
            }
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let result = match &cli.command {
        Command::Parse(a) => cmd_parse(a),
        Command::Fixpoint(a) => cmd_fixpoint(a),
        Command::Check(a) => cmd_check(a, a.trace),
        Command::Trace(a) => cmd_check(a, true),
        Command::Oracle(a) => cmd_oracle(a),
    };
    result.unwrap_or_else(|e| Outcome { code: EXIT_ERROR, stdout: String::new(), stderr: format!("error: {e}\n") })
}

fn load(path: &Path) -> Result<Program, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_program(&text).map_err(|source| CliError::Syntax { path: path.display().to_string(), source })
}

fn load_all(file: &Path, extra: &[PathBuf]) -> Result<Program, CliError> {
    let mut program = load(file)?;
    for p in extra {
        program.extend(&load(p)?).map_err(|source| CliError::Syntax { path: p.display().to_string(), source })?;
    }
    Ok(program)
}

pub fn fact_atoms(f: &Fact) -> Vec<String> {
    f.iter().map(|a| a.to_string()).collect()
}

/// `{a1, a2}` with atoms in canonical order.
pub fn show_fact(f: &Fact) -> String {
    format!("{{{}}}", fact_atoms(f).join(", "))
}

fn cmd_parse(a: &ParseArgs) -> Result<Outcome, CliError> {
    let program = load(&a.file)?;
    let mut out = String::new();
    if a.json {
        let clauses: Vec<String> = program.clauses.iter().map(|c| c.to_string()).collect();
        out = serde_json::to_string_pretty(&serde_json::json!({ "clauses": clauses })).unwrap();
        out.push('\n');
    } else {
        write!(out, "{program}").unwrap();
    }
    let mut stderr = String::new();
    for w in &program.warnings {
        writeln!(stderr, "warning: {w}").unwrap();
    }
    Ok(Outcome { code: EXIT_SAFE, stdout: out, stderr })
}

struct Analysis {
    program: Program,
    result: FixpointResult,
}

fn analyse(a: &EngineArgs) -> Result<Analysis, CliError> {
    let mut program = load_all(&a.file, &a.strengthen)?;
    if a.monadize {
        program = monadize(&program).map_err(|e| CliError::Monadize(e.to_string()))?;
    }
    let asat = if a.no_prune { AsatOptions::unpruned() } else { AsatOptions::default() };
    let opts = FixpointOptions { max_rounds: a.max_rounds, asat, delta: a.delta };
    let result = fixpoint(&program, &opts);
    Ok(Analysis { program, result })
}

fn report(r: &FixpointResult) -> FixpointReport {
    FixpointReport {
        facts: r.interpretation.iter().map(fact_atoms).collect(),
        rounds: r.rounds,
        terminated: r.terminated,
        monadic: r.monadic_guarantee,
        verdict: None,
        trace: Vec::new(),
    }
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn write_summary(out: &mut String, r: &FixpointResult) {
    for f in r.interpretation.iter() {
        writeln!(out, "{}", show_fact(f)).unwrap();
    }
    writeln!(out, "facts: {}", r.interpretation.len()).unwrap();
    writeln!(out, "rounds: {}", r.rounds).unwrap();
    writeln!(out, "terminated: {}", yes(r.terminated)).unwrap();
    writeln!(out, "monadic: {}", yes(r.monadic_guarantee)).unwrap();
}

fn to_json(rep: &FixpointReport) -> String {
    let mut s = serde_json::to_string_pretty(rep).unwrap();
    s.push('\n');
    s
}

fn cmd_fixpoint(a: &EngineArgs) -> Result<Outcome, CliError> {
    let Analysis { result, .. } = analyse(a)?;
    let code = if result.terminated { EXIT_SAFE } else { EXIT_UNKNOWN };
    if a.json {
        return Ok(Outcome::ok(code, to_json(&report(&result))));
    }
    let mut out = String::new();
    write_summary(&mut out, &result);
    Ok(Outcome::ok(code, out))
}

fn goal_for(program: &Program, text: &str, monadized: bool) -> Result<Goal, CliError> {
    let goal = parse_goal(text).map_err(CliError::Goal)?;
    if !monadized {
        return Ok(goal);
    }
    match goal.as_par_atoms() {
        Some(atoms) => Ok(Goal::from_fact(&monadize_fact(program, &Fact::new(atoms)))),
        None => Err(CliError::Monadize("goal is not a `|`-list of atoms".into())),
    }
}

fn trace_entries(t: &Trace) -> Vec<TraceEntry> {
    t.steps
        .iter()
        .map(|s| TraceEntry {
            clause: s.clause.clone(),
            configuration: fact_atoms(&s.configuration),
            subst: s.subst.to_string(),
        })
        .collect()
}

fn validate(program: &Program, t: &Trace, goal: &Goal) -> Result<(), CliError> {
    check_proof(program, &t.signature, &t.proof).map_err(|e| CliError::Replay(e.to_string()))?;
    let depth = t.proof.bc_count();
    if Prover::new(program).prove(std::slice::from_ref(goal), &t.signature, depth).is_none() {
        return Err(CliError::Replay(format!("no proof within {depth} steps")));
    }
    Ok(())
}

fn cmd_check(a: &CheckArgs, show_trace: bool) -> Result<Outcome, CliError> {
    let Analysis { program, result } = analyse(&a.engine)?;
    let goal = goal_for(&program, &a.goal, a.engine.monadize)?;
    let entailed = check_goal(&result, &goal).is_some();
    let (verdict, code) = match (entailed, result.terminated) {
        (true, _) => ("VIOLATION", EXIT_VIOLATION),
        (false, true) => ("SAFE", EXIT_SAFE),
        (false, false) => ("UNKNOWN", EXIT_UNKNOWN),
    };
    let trace = if entailed && (show_trace || a.validate || a.engine.json) {
        let t = extract_trace(&program, &result, &goal)?;
        if a.validate {
            validate(&program, &t, &goal)?;
        }
        Some(t)
    } else {
        None
    };
    if a.engine.json {
        let mut rep = report(&result);
        rep.verdict = Some(verdict.to_string());
        rep.trace = trace.as_ref().map(trace_entries).unwrap_or_default();
        return Ok(Outcome::ok(code, to_json(&rep)));
    }
    let mut out = String::new();
    writeln!(out, "{verdict}").unwrap();
    writeln!(out, "rounds: {}", result.rounds).unwrap();
    writeln!(out, "terminated: {}", yes(result.terminated)).unwrap();
    if let Some(t) = trace.filter(|_| show_trace || a.validate) {
        writeln!(out, "trace:").unwrap();
        write!(out, "{t}").unwrap();
        if a.validate {
            writeln!(out, "replay: ok ({} steps)", t.proof.bc_count()).unwrap();
        }
    }
    Ok(Outcome::ok(code, out))
}

fn cmd_oracle(a: &OracleArgs) -> Result<Outcome, CliError> {
    let program = load_all(&a.file, &a.strengthen)?;
    let goal = parse_goal(&a.goal).map_err(CliError::Goal)?;
    let sig = program
        .signature_with_goal(&goal)
        .map_err(|source| CliError::Syntax { path: a.file.display().to_string(), source })?;
    let found = Prover::new(&program).prove_iterative(std::slice::from_ref(&goal), &sig, a.depth);
    let code = if found.is_some() { EXIT_VIOLATION } else { EXIT_UNKNOWN };
    if a.json {
        let doc = match &found {
            Some((p, d)) => serde_json::json!({ "found": true, "depth": d, "size": p.size(), "proof": p.to_string() }),
            None => serde_json::json!({ "found": false, "depth": a.depth }),
        };
        return Ok(Outcome::ok(code, format!("{}\n", serde_json::to_string_pretty(&doc).unwrap())));
    }
    let mut out = String::new();
    match found {
        Some((p, d)) => {
            writeln!(out, "proof found: size {}, {} backchaining steps", p.size(), d).unwrap();
            write!(out, "{p}").unwrap();
        }
        None => writeln!(out, "not found within depth {}", a.depth).unwrap(),
    }
    Ok(Outcome::ok(code, out))
}
