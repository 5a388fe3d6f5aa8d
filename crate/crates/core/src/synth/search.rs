//! Parallel search over hoisted programs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::bind::{attack_to_json, bind, validate_replay};
use super::{
    evaluate_candidate, evaluate_direct, hoist, make_sketch, may_call, may_call_and_store, may_store_and_call, HoistedProgram,
    SynthError, DEFAULT_TASK_CAP,
};
use crate::interp::concrete::ConcreteAttack;
use crate::interp::{EvalConfig, EvalResult};
use crate::ir::{AbiSpec, Contract, Function, Width, Word};
use crate::queries::{build, Query, QueryInput, Shape};
use crate::smt::{Interference, SatResult, Solver, SolverConfig};
use crate::state::{initial_state, CVal, Environment, Kind, ProgramState, StateConfig, SymExpr, SymVar, Uf, VarFactory};
use crate::summary::{summarize_contract, ContractSummaries};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// Apply precomputed method summaries.
    Summary,
    /// Re-run method bodies for every candidate.
    Direct,
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub max_len: usize,
    pub jobs: usize,
    pub task_cap: usize,
    pub mode: EvalMode,
    /// Skip candidates whose methods cannot produce the query's trace shape.
    pub prune: bool,
    /// Keep searching after the first attack and report every one found.
    pub all: bool,
    /// Fresh models tried after a replay mismatch.
    pub retries: usize,
    pub solver: SolverConfig,
    pub eval: EvalConfig,
    pub state: StateConfig,
    /// Wall-clock budget for the whole search.
    pub timeout: Option<Duration>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_len: 3,
            jobs: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            task_cap: DEFAULT_TASK_CAP,
            mode: EvalMode::Summary,
            prune: true,
            all: false,
            retries: 2,
            solver: SolverConfig::default(),
            eval: EvalConfig::default(),
            state: StateConfig::default(),
            timeout: None,
        }
    }
}

impl SynthConfig {
    pub fn for_width(width: Width) -> SynthConfig {
        SynthConfig { eval: EvalConfig::for_width(width), state: StateConfig::with_width(width), ..SynthConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Attack,
    NoAttack,
    Unknown(String),
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Attack => "attack",
            Outcome::NoAttack => "no-attack",
            Outcome::Unknown(_) => "unknown",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttackReport {
    pub attack: ConcreteAttack,
    pub program: String,
    /// Which disjunct of the query the model satisfies.
    pub disjunct: String,
    /// Model values of the attack and environment variables.
    pub model: Vec<(String, String)>,
    pub defaulted: Vec<String>,
    pub transcript: Vec<String>,
    pub digest: String,
}

impl AttackReport {
    pub fn to_json(&self) -> Value {
        json!({
            "attack": attack_to_json(&self.attack),
            "program": self.program,
            "disjunct": self.disjunct,
            "model": self.model.iter().map(|(k, v)| json!([k, v])).collect::<Vec<_>>(),
            "defaulted": self.defaulted,
            "transcript": self.transcript,
            "digest": self.digest,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct SynthStats {
    pub tasks: usize,
    pub pruned: usize,
    pub evaluated: usize,
    pub solver_calls: usize,
    pub unknowns: usize,
    pub interference_unknowns: usize,
    pub replay_rejections: usize,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct SynthesisReport {
    pub query: Query,
    pub outcome: Outcome,
    pub attacks: Vec<AttackReport>,
    pub stats: SynthStats,
    pub notes: Vec<String>,
}

impl SynthesisReport {
    pub fn to_json(&self) -> Value {
        let s = &self.stats;
        json!({
            "query": self.query.name(),
            "outcome": self.outcome.name(),
            "reason": match &self.outcome { Outcome::Unknown(r) => Some(r.clone()), _ => None },
            "attacks": self.attacks.iter().map(AttackReport::to_json).collect::<Vec<_>>(),
            "stats": {
                "tasks": s.tasks,
                "pruned": s.pruned,
                "evaluated": s.evaluated,
                "solver_calls": s.solver_calls,
                "unknowns": s.unknowns,
                "interference_unknowns": s.interference_unknowns,
                "replay_rejections": s.replay_rejections,
                "elapsed_ms": s.elapsed.as_millis() as u64,
            },
            "notes": self.notes,
        })
    }
}

enum TaskResult {
    Pruned,
    Clean,
    Attack(Box<AttackReport>),
    Unknown(String),
}

struct Shared<'a> {
    contract: &'a Contract,
    summaries: &'a ContractSummaries,
    gamma0: &'a ProgramState,
    env: &'a Environment,
    query: &'a Query,
    cfg: &'a SynthConfig,
    deadline: Option<Instant>,
}

#[derive(Default)]
struct WorkerTally {
    evaluated: usize,
    solver_calls: usize,
    unknowns: usize,
    interference_unknowns: usize,
    replay_rejections: usize,
}

fn shape_possible(shape: Shape, h: &HoistedProgram, sums: &ContractSummaries) -> bool {
    match shape {
        Shape::StoreThenCall => may_store_and_call(h, sums),
        Shape::CallThenStore => may_call_and_store(h, sums),
        Shape::AnyCall => may_call(h, sums),
    }
}

/// `ret == 1` for every call result in `f`; replay treats every call as
/// successful, so models have to agree.
fn calls_succeed(f: &SymExpr) -> SymExpr {
    SymExpr::and_all(f.apps().into_iter().filter(|a| matches!(a.kind(), Kind::App(Uf::Call(_), _))).map(|a| {
        let w = a.width().expect("call result is a word");
        SymExpr::eq(a, SymExpr::word(Word::one(w)))
    }))
}

fn block(vars: &[SymVar], a: &crate::state::Assignment) -> SymExpr {
    use crate::state::Interpretation;
    SymExpr::not(SymExpr::and_all(vars.iter().filter_map(|v| a.var(v).map(|c| SymExpr::eq(SymExpr::var(v), c.to_expr())))))
}

fn show(c: CVal) -> String {
    match c {
        CVal::Bool(b) => b.to_string(),
        CVal::Word(w) => w.to_hex(),
    }
}

fn run_task(sh: &Shared, h: &HoistedProgram, solver: &mut Solver, inter: &mut Interference, t: &mut WorkerTally) -> TaskResult {
    if sh.cfg.prune && !shape_possible(sh.query.shape(), h, sh.summaries) {
        return TaskResult::Pruned;
    }
    t.evaluated += 1;
    let res: EvalResult = match sh.cfg.mode {
        EvalMode::Summary => evaluate_candidate(h, sh.gamma0, sh.summaries),
        EvalMode::Direct => evaluate_direct(h, sh.gamma0, sh.contract, &sh.cfg.eval),
    }
    .unwrap_or_else(|e| panic!("candidate {} failed to evaluate: {e}", h.describe()));
    let args = h.vars();
    let before = inter.unknowns;
    let qf = match build(sh.query, &QueryInput { result: &res, args: &args, env: sh.env }, solver, inter) {
        Ok(q) => q,
        Err(e) => return TaskResult::Unknown(e.to_string()),
    };
    t.interference_unknowns += inter.unknowns - before;
    if qf.disjuncts.is_empty() {
        return TaskResult::Clean;
    }
    let goal = qf.formula();
    let mut f = SymExpr::and(goal.clone(), calls_succeed(&goal));
    let mut free: Vec<SymVar> = args.clone();
    free.extend(sh.env.vars());
    for _ in 0..=sh.cfg.retries {
        match solver.check(&f) {
            SatResult::Unsat => return TaskResult::Clean,
            SatResult::Unknown(why) => {
                t.unknowns += 1;
                return TaskResult::Unknown(format!("{}: {why}", h.describe()));
            }
            SatResult::Sat(model) => {
                let b = bind(&model, h, sh.env, sh.cfg.state.width);
                for d in &qf.disjuncts {
                    if d.formula.eval(&b.assignment) != Some(CVal::Bool(true)) {
                        continue;
                    }
                    let v = validate_replay(sh.contract, &b, &res, d, &sh.cfg.state, &sh.cfg.eval);
                    if v.ok {
                        let model = free.iter().filter_map(|x| model.value(x).map(|c| (x.name().to_string(), show(c)))).collect();
                        return TaskResult::Attack(Box::new(AttackReport {
                            attack: b.attack,
                            program: h.describe(),
                            disjunct: d.label.clone(),
                            model,
                            defaulted: b.defaulted,
                            transcript: v.transcript,
                            digest: v.digest,
                        }));
                    }
                }
                t.replay_rejections += 1;
                f = SymExpr::and(f, block(&free, &b.assignment));
            }
        }
    }
    TaskResult::Unknown(format!("{}: no model survived replay after {} attempts", h.describe(), sh.cfg.retries + 1))
}

/// Methods of `abi`, checked against the contract's definitions.
fn components<'c>(c: &'c Contract, abi: &AbiSpec) -> Result<Vec<&'c Function>, SynthError> {
    let mut out = Vec::new();
    for comp in &abi.components {
        let f = c.function(&comp.name).ok_or_else(|| SynthError::Interface(format!("`{}` is not defined", comp.name)))?;
        if !f.public {
            return Err(SynthError::Interface(format!("`{}` is not public", comp.name)));
        }
        if f.param_sorts() != comp.params {
            return Err(SynthError::Interface(format!("parameter types of `{}` disagree with the contract", comp.name)));
        }
        out.push(f);
    }
    Ok(out)
}

/// Decides a single hoisted program: `choice[i]` indexes the interface
/// method run in slot `i`. Pruning applies as in [`synthesize`].
pub fn check_program(
    c: &Contract,
    abi: &AbiSpec,
    query: &Query,
    cfg: &SynthConfig,
    choice: &[usize],
) -> Result<(Outcome, Option<AttackReport>), SynthError> {
    let width = cfg.state.width;
    let comps = components(c, abi)?;
    let vf = VarFactory::new();
    let (gamma0, env) = initial_state(c, &cfg.state, &vf);
    let summaries = summarize_contract(c, width, &cfg.eval, &vf)?;
    let sketch = make_sketch(&comps, choice.len(), width, &cfg.eval, &vf)?;
    let slots = choice.iter().enumerate().map(|(slot, &ci)| sketch.holes[slot][ci].clone()).collect();
    let h = HoistedProgram { index: 0, choice: choice.to_vec(), slots };
    let sh = Shared { contract: c, summaries: &summaries, gamma0: &gamma0, env: &env, query, cfg, deadline: None };
    let mut solver = Solver::new(cfg.solver.clone());
    let r = run_task(&sh, &h, &mut solver, &mut Interference::new(), &mut WorkerTally::default());
    Ok(match r {
        TaskResult::Pruned | TaskResult::Clean => (Outcome::NoAttack, None),
        TaskResult::Attack(a) => (Outcome::Attack, Some(*a)),
        TaskResult::Unknown(why) => (Outcome::Unknown(why), None),
    })
}

/// Searches sketches of length 1 to `max_len` for an attack on `c` through
/// the methods of `abi`. Shorter attacks are preferred; within one length
/// the first hoisted program in lexicographic order wins.
pub fn synthesize(c: &Contract, abi: &AbiSpec, query: &Query, cfg: &SynthConfig) -> Result<SynthesisReport, SynthError> {
    let start = Instant::now();
    let deadline = cfg.timeout.map(|t| start + t);
    let width = cfg.state.width;
    let comps = components(c, abi)?;
    if comps.is_empty() {
        let notes = vec!["the interface has no methods, so no attack exists".to_string()];
        let stats = SynthStats { elapsed: start.elapsed(), ..SynthStats::default() };
        return Ok(SynthesisReport { query: query.clone(), outcome: Outcome::NoAttack, attacks: Vec::new(), stats, notes });
    }
    let vf = VarFactory::new();
    let (gamma0, env) = initial_state(c, &cfg.state, &vf);
    let summaries = summarize_contract(c, width, &cfg.eval, &vf)?;
    let mut notes = Vec::new();
    for m in &summaries.methods {
        if m.truncated {
            notes.push(format!("`{}` hit the unroll bound; its summary covers bounded paths only", m.method));
        }
    }
    let sh = Shared { contract: c, summaries: &summaries, gamma0: &gamma0, env: &env, query, cfg, deadline };

    let mut stats = SynthStats::default();
    let mut attacks = Vec::new();
    let mut unknown: Option<String> = None;
    for k in 1..=cfg.max_len.max(1) {
        let sketch = make_sketch(&comps, k, width, &cfg.eval, &vf)?;
        let tasks = hoist(&sketch, cfg.task_cap)?;
        stats.tasks += tasks.len();
        let (results, tally) = run_pool(&sh, &tasks);
        for t in tally {
            stats.evaluated += t.evaluated;
            stats.solver_calls += t.solver_calls;
            stats.unknowns += t.unknowns;
            stats.interference_unknowns += t.interference_unknowns;
            stats.replay_rejections += t.replay_rejections;
        }
        let mut timed_out = false;
        for (_, r) in results {
            match r {
                Some(TaskResult::Pruned) => stats.pruned += 1,
                Some(TaskResult::Clean) => {}
                Some(TaskResult::Attack(a)) => attacks.push(*a),
                Some(TaskResult::Unknown(why)) => {
                    unknown.get_or_insert(why);
                }
                None => timed_out = true,
            }
        }
        if stats.interference_unknowns > 0 {
            notes.push(format!("{} dependency checks were inconclusive and counted as dependent", stats.interference_unknowns));
        }
        if timed_out && attacks.is_empty() {
            unknown.get_or_insert_with(|| "time budget exhausted".into());
            break;
        }
        if !attacks.is_empty() && !cfg.all {
            attacks.truncate(1);
            break;
        }
    }
    notes.dedup();
    stats.elapsed = start.elapsed();
    let outcome = if !attacks.is_empty() {
        Outcome::Attack
    } else if let Some(why) = unknown {
        Outcome::Unknown(why)
    } else {
        Outcome::NoAttack
    };
    Ok(SynthesisReport { query: query.clone(), outcome, attacks, stats, notes })
}

/// Runs every task on `cfg.jobs` workers. Results come back in task order;
/// `None` marks tasks skipped because a lower-indexed attack already exists
/// (only when `all` is off) or the deadline passed.
fn run_pool(sh: &Shared, tasks: &[HoistedProgram]) -> (Vec<(usize, Option<TaskResult>)>, Vec<WorkerTally>) {
    let next = AtomicUsize::new(0);
    let best = AtomicUsize::new(usize::MAX);
    let slots: Mutex<Vec<Option<TaskResult>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let skipped_for_best = Mutex::new(Vec::new());
    let tallies = Mutex::new(Vec::new());
    let jobs = sh.cfg.jobs.clamp(1, tasks.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| {
                let mut solver = Solver::new(sh.cfg.solver.clone());
                let mut inter = Interference::new();
                let mut tally = WorkerTally::default();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= tasks.len() {
                        break;
                    }
                    if !sh.cfg.all && i > best.load(Ordering::Relaxed) {
                        skipped_for_best.lock().unwrap().push(i);
                        continue;
                    }
                    if sh.deadline.is_some_and(|d| Instant::now() >= d) {
                        continue;
                    }
                    let r = run_task(sh, &tasks[i], &mut solver, &mut inter, &mut tally);
                    if matches!(r, TaskResult::Attack(_)) {
                        best.fetch_min(i, Ordering::Relaxed);
                    }
                    slots.lock().unwrap()[i] = Some(r);
                }
                tally.solver_calls = solver.stats.calls;
                tallies.lock().unwrap().push(tally);
            });
        }
    });
    let skipped = skipped_for_best.into_inner().unwrap();
    let mut out: Vec<(usize, Option<TaskResult>)> = slots.into_inner().unwrap().into_iter().enumerate().collect();
    // Tasks skipped because of an earlier attack are not unknowns.
    for i in skipped {
        out[i].1 = Some(TaskResult::Clean);
    }
    (out, tallies.into_inner().unwrap())
}
