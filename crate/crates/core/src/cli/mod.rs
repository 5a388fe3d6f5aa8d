//! Command-line front end.
//!
//! Every flag can also be set through an environment variable named
//! `ATTACK_SYNTH_<FLAG>` (upper case, dashes as underscores), or through a
//! TOML file given with `--config`. Flags beat the environment, which beats
//! the file.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::interp::concrete::replay;
use crate::ir::{parse_abi, parse_contract, validate, AbiSpec, Contract};
use crate::queries::Query;
use crate::state::VarFactory;
use crate::summary::summarize_contract;
use crate::synth::{attack_from_json, synthesize, Outcome, SynthesisReport};

pub use config::{FileConfig, RunConfig};

/// Exit statuses; a total function of the outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Attack = 0,
    NoAttack = 1,
    Unknown = 2,
    InputError = 3,
}

impl Exit {
    pub fn of(outcome: &Outcome) -> Exit {
        match outcome {
            Outcome::Attack => Exit::Attack,
            Outcome::NoAttack => Exit::NoAttack,
            Outcome::Unknown(_) => Exit::Unknown,
        }
    }

    /// Combined status of several queries: any attack wins, then any
    /// unknown.
    pub fn combine(outcomes: &[Outcome]) -> Exit {
        if outcomes.iter().any(|o| *o == Outcome::Attack) {
            Exit::Attack
        } else if outcomes.iter().any(|o| matches!(o, Outcome::Unknown(_))) {
            Exit::Unknown
        } else {
            Exit::NoAttack
        }
    }
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> ExitCode {
        ExitCode::from(e as u8)
    }
}

#[derive(Parser, Debug)]
#[command(name = "attack-synth", version, about = "Synthesize concrete attacks on smart contracts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Search for an attack and write the report as JSON.
    Synth(SynthArgs),
    /// Print the method summaries of a contract as JSON.
    Summarize(SummarizeArgs),
    /// Replay an attack file concretely and print the transcript.
    Exec(ExecArgs),
    /// Run queries over every contract in a directory and write a CSV.
    Batch(BatchArgs),
}

/// Options shared by all subcommands.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, env = "ATTACK_SYNTH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Loop back edges per invocation.
    #[arg(long, env = "ATTACK_SYNTH_UNROLL")]
    pub unroll: Option<usize>,
    /// Times a call site may re-enter its own function.
    #[arg(long, env = "ATTACK_SYNTH_REENTRANCY_DEPTH")]
    pub reentrancy_depth: Option<u32>,
    /// Solver command line, speaking SMT-LIB on stdin.
    #[arg(long, env = "ATTACK_SYNTH_SOLVER_CMD")]
    pub solver_cmd: Option<String>,
    #[arg(long, env = "ATTACK_SYNTH_SEED")]
    pub seed: Option<u64>,
    /// Output file (or directory for `batch`); stdout when absent.
    #[arg(long, env = "ATTACK_SYNTH_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SearchArgs {
    /// Query name, a comma-separated list, or `all`.
    #[arg(long, env = "ATTACK_SYNTH_QUERY")]
    pub query: Option<String>,
    /// Longest attack considered.
    #[arg(long, env = "ATTACK_SYNTH_MAX_LEN")]
    pub max_len: Option<usize>,
    #[arg(long, env = "ATTACK_SYNTH_JOBS")]
    pub jobs: Option<usize>,
    /// Seconds per contract.
    #[arg(long, env = "ATTACK_SYNTH_TIMEOUT")]
    pub timeout: Option<u64>,
    /// Report every attack of the shortest length instead of the first.
    #[arg(long, env = "ATTACK_SYNTH_ALL")]
    pub all: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, env = "ATTACK_SYNTH_CONTRACT")]
    pub contract: PathBuf,
    /// Interface; defaults to the contract path with `.abi.json`.
    #[arg(long, env = "ATTACK_SYNTH_ABI")]
    pub abi: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    #[arg(long, env = "ATTACK_SYNTH_CONTRACT")]
    pub contract: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct ExecArgs {
    #[arg(long, env = "ATTACK_SYNTH_CONTRACT")]
    pub contract: PathBuf,
    /// Attack JSON, as written in `attacks[].attack` of a synth report.
    #[arg(long)]
    pub attack: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Directory of `name.ir` files, each with `name.abi.json` next to it.
    #[arg(long)]
    pub dir: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug)]
pub struct InputError(pub String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> InputError {
        InputError(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

fn default_abi(contract: &Path) -> PathBuf {
    contract.with_extension("abi.json")
}

/// Parses and validates a contract and its interface.
pub fn load(contract: &Path, abi: Option<&Path>) -> Result<(Contract, AbiSpec), InputError> {
    let c = parse_contract(&read(contract)?).map_err(|e| InputError(format!("{}: {e}", contract.display())))?;
    let abi_path = abi.map(Path::to_path_buf).unwrap_or_else(|| default_abi(contract));
    let spec = if abi.is_none() && !abi_path.exists() {
        AbiSpec::from_contract(&c)
    } else {
        parse_abi(&read(&abi_path)?).map_err(|e| InputError(format!("{}: {e}", abi_path.display())))?
    };
    if let Err(diags) = validate(&c, &spec) {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(InputError(format!("{}:\n  {}", contract.display(), lines.join("\n  "))));
    }
    Ok((c, spec))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), InputError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| InputError(format!("{}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            writeln!(so, "{text}").map_err(InputError::from)
        }
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json")
}

pub fn run(cli: Cli) -> Exit {
    let r = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Summarize(a) => cmd_summarize(&a),
        Command::Exec(a) => cmd_exec(&a),
        Command::Batch(a) => cmd_batch(&a),
    };
    r.unwrap_or_else(|e| {
        eprintln!("error: {}", e.0);
        Exit::InputError
    })
}

fn reports_json(contract: &Path, reports: &[SynthesisReport]) -> Value {
    json!({
        "contract": contract.display().to_string(),
        "reports": reports.iter().map(SynthesisReport::to_json).collect::<Vec<_>>(),
    })
}

fn synth_queries(c: &Contract, abi: &AbiSpec, rc: &RunConfig) -> Result<Vec<SynthesisReport>, InputError> {
    let mut out = Vec::new();
    for q in &rc.queries {
        out.push(synthesize(c, abi, q, &rc.synth)?);
    }
    Ok(out)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<Exit, InputError> {
    let rc = RunConfig::resolve(&a.common, Some(&a.search))?;
    let (c, abi) = load(&a.contract, a.abi.as_deref())?;
    let reports = synth_queries(&c, &abi, &rc)?;
    for r in &reports {
        eprintln!(
            "{}: {} ({} tasks, {} pruned, {} solver calls, {:.2?})",
            r.query,
            r.outcome.name(),
            r.stats.tasks,
            r.stats.pruned,
            r.stats.solver_calls,
            r.stats.elapsed
        );
    }
    emit(a.common.out.as_deref(), &pretty(&reports_json(&a.contract, &reports)))?;
    Ok(Exit::combine(&reports.iter().map(|r| r.outcome.clone()).collect::<Vec<_>>()))
}

pub fn cmd_summarize(a: &SummarizeArgs) -> Result<Exit, InputError> {
    let rc = RunConfig::resolve(&a.common, None)?;
    let c = parse_contract(&read(&a.contract)?).map_err(|e| InputError(format!("{}: {e}", a.contract.display())))?;
    if let Err(d) = validate(&c, &AbiSpec::from_contract(&c)) {
        return Err(InputError(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n")));
    }
    let sums = summarize_contract(&c, rc.synth.state.width, &rc.synth.eval, &VarFactory::new())?;
    let v: Vec<_> = sums.methods.iter().map(|m| m.to_json()).collect();
    emit(a.common.out.as_deref(), &serde_json::to_string_pretty(&v)?)?;
    Ok(Exit::Attack)
}

pub fn cmd_exec(a: &ExecArgs) -> Result<Exit, InputError> {
    let rc = RunConfig::resolve(&a.common, None)?;
    let c = parse_contract(&read(&a.contract)?).map_err(|e| InputError(format!("{}: {e}", a.contract.display())))?;
    let v: Value = serde_json::from_str(&read(&a.attack)?)?;
    // Accept a bare attack or a whole report entry.
    let v = v.get("attack").cloned().unwrap_or(v);
    let attack = attack_from_json(&v, rc.synth.state.width).map_err(InputError)?;
    let rep = replay(&c, &attack, &rc.synth.state, &rc.synth.eval)?;
    let mut lines = Vec::new();
    for (i, (call, st)) in attack.calls.iter().zip(&rep.statuses).enumerate() {
        lines.push(format!("#{i} {} -> {:?}", call.function, st));
    }
    lines.extend(rep.trace.iter().map(|e| e.to_string()));
    lines.push(format!("balance {}", rep.world.balance.to_hex()));
    emit(a.common.out.as_deref(), &lines.join("\n"))?;
    Ok(Exit::Attack)
}

/// Pairs of `name.ir` and `name.abi.json` in `dir`, sorted by name.
fn corpus(dir: &Path) -> Result<Vec<(String, PathBuf)>, InputError> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| InputError(format!("{}: {e}", dir.display())))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "ir") {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            out.push((name, p));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BatchRow {
    pub contract: String,
    pub query: String,
    pub outcome: String,
    pub wall_ms: u128,
    pub pruned: usize,
    pub solver_calls: usize,
}

/// Runs every query on every contract of `dir`. Failures to load a
/// contract produce `input-error` rows and do not stop the batch.
pub fn batch_rows(dir: &Path, rc: &RunConfig, reports_dir: Option<&Path>) -> Result<Vec<BatchRow>, InputError> {
    let items = corpus(dir)?;
    let outer = rc.synth.jobs.min(items.len()).max(1);
    let mut inner = rc.clone();
    inner.synth.jobs = (rc.synth.jobs / outer).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(outer).build()?;
    let write_err = Mutex::new(None);
    let rows: Vec<Vec<BatchRow>> = pool.install(|| {
        items
            .par_iter()
            .map(|(name, path)| {
                let rows_of = |q: &Query, outcome: String, ms: u128, pruned, calls| BatchRow {
                    contract: name.clone(),
                    query: q.name(),
                    outcome,
                    wall_ms: ms,
                    pruned,
                    solver_calls: calls,
                };
                let (c, abi) = match load(path, None) {
                    Ok(x) => x,
                    Err(e) => {
                        eprintln!("{name}: {}", e.0);
                        return inner.queries.iter().map(|q| rows_of(q, "input-error".into(), 0, 0, 0)).collect();
                    }
                };
                let mut rows = Vec::new();
                let mut reports = Vec::new();
                for q in &inner.queries {
                    let t = Instant::now();
                    match synthesize(&c, &abi, q, &inner.synth) {
                        Ok(r) => {
                            rows.push(rows_of(q, r.outcome.name().into(), t.elapsed().as_millis(), r.stats.pruned, r.stats.solver_calls));
                            reports.push(r);
                        }
                        Err(e) => {
                            eprintln!("{name}: {q}: {e}");
                            rows.push(rows_of(q, "input-error".into(), t.elapsed().as_millis(), 0, 0));
                        }
                    }
                }
                if let Some(d) = reports_dir {
                    let text = pretty(&reports_json(path, &reports));
                    if let Err(e) = fs::write(d.join(format!("{name}.json")), text) {
                        *write_err.lock().unwrap() = Some(InputError(e.to_string()));
                    }
                }
                rows
            })
            .collect()
    });
    if let Some(e) = write_err.into_inner().unwrap() {
        return Err(e);
    }
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_csv<W: std::io::Write>(rows: &[BatchRow], w: W) -> Result<(), InputError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["contract", "query", "outcome", "wall_ms", "pruned", "solver_calls"])?;
    for r in rows {
        wr.write_record([
            r.contract.clone(),
            r.query.clone(),
            r.outcome.clone(),
            r.wall_ms.to_string(),
            r.pruned.to_string(),
            r.solver_calls.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// With `--out DIR`, writes `DIR/NAME.json` per contract and
/// `DIR/batch.csv`; otherwise the CSV goes to stdout.
pub fn cmd_batch(a: &BatchArgs) -> Result<Exit, InputError> {
    let rc = RunConfig::resolve(&a.common, Some(&a.search))?;
    let out = a.common.out.as_deref();
    if let Some(d) = out {
        fs::create_dir_all(d).map_err(|e| InputError(format!("{}: {e}", d.display())))?;
    }
    let rows = batch_rows(&a.dir, &rc, out)?;
    match out {
        Some(d) => write_csv(&rows, fs::File::create(d.join("batch.csv"))?)?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(Exit::Attack)
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::InputError as i32 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    run(cli).into()
}
