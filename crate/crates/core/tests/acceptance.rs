//! End-to-end acceptance checks. Runs sequentially (timed criteria share
//! the machine with nothing else) and prints one line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use attack_synth::gen::{random_victim, VictimShape};
use attack_synth::interp::concrete::{replay, ConcreteArg, ConcreteKind};
use attack_synth::interp::EvalConfig;
use attack_synth::ir::{AbiSpec, BinOp, Width};
use attack_synth::queries::Query;
use attack_synth::smt::{Interference, Solver, SolverConfig};
use attack_synth::state::{Assignment, CVal, StateConfig, Sort, SymExpr, SymVar, VarFactory, VarOrigin};
use attack_synth::summary::check_contract;
use attack_synth::synth::{
    attack_from_json, check_program, hoist, make_sketch, may_store_and_call, synthesize, EvalMode, Outcome, SynthConfig,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ruint::aliases::U256;
use serde_json::Value;

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Cli {
    code: i32,
    json: Value,
    elapsed: Duration,
}

fn cli(args: &[&str]) -> Cli {
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_attack-synth")).args(args).output().expect("run the binary");
    let elapsed = t.elapsed();
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    Cli { code: out.status.code().unwrap_or(-1), json, elapsed }
}

fn synth(name: &str, extra: &[&str]) -> Cli {
    let path = contract_path(name);
    let mut args = vec!["synth", "--contract", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    cli(&args)
}

fn first_attack(r: &Cli) -> Option<&Value> {
    r.json["reports"][0]["attacks"].get(0).map(|a| &a["attack"])
}

fn batch_overflow() -> Verdict {
    let r = synth("pausable_token", &["--query", "batch-overflow", "--max-len", "3"]);
    ensure!(r.code == 0, "exit code {}", r.code);
    ensure!(r.elapsed < Duration::from_secs(60), "took {:.1?}", r.elapsed);
    let attack = attack_from_json(first_attack(&r).ok_or("no attack in the report")?, Width::W256)?;
    let names: Vec<&str> = attack.calls.iter().map(|c| c.function.as_str()).collect();
    let bt = names.iter().position(|n| *n == "batchTransfer").ok_or("no batchTransfer call")?;
    let flag_set = attack.calls[..bt]
        .iter()
        .any(|c| c.function == "makeFlag" && c.args == vec![ConcreteArg::Scalar(CVal::Bool(true))]);
    ensure!(flag_set, "no makeFlag(true) before batchTransfer: {names:?}");
    let (ConcreteArg::Array { length, .. }, ConcreteArg::Scalar(CVal::Word(value))) =
        (&attack.calls[bt].args[0], &attack.calls[bt].args[1])
    else {
        return Err("batchTransfer arguments have the wrong shape".into());
    };
    let amount = length.value().wrapping_mul(value.value());
    ensure!(amount < value.value(), "cnt * _value = {amount} does not wrap below {}", value.value());
    let (c, _) = load("pausable_token");
    let rep = replay(&c, &attack, &StateConfig::default(), &EvalConfig::default()).map_err(|e| e.to_string())?;
    ensure!(rep.statuses[bt].is_completed(), "batchTransfer reverted: {:?}", rep.statuses[bt]);
    let paid = rep.trace.iter().any(|e| {
        e.tag.slot == bt && matches!(e.kind, ConcreteKind::Call { value: v, selfdestruct: false, .. } if v == *value)
    });
    ensure!(paid, "replay shows no transfer of _value");
    Ok(format!("{names:?}, cnt={} _value={}, {:.1?}", length.value(), value.to_hex(), r.elapsed))
}

fn reentrancy() -> Verdict {
    let r = synth("dao", &["--query", "reentrancy", "--reentrancy-depth", "1"]);
    ensure!(r.code == 0, "dao: exit code {}", r.code);
    ensure!(r.elapsed < Duration::from_secs(30), "dao took {:.1?}", r.elapsed);
    let attack = attack_from_json(first_attack(&r).ok_or("no attack in the report")?, Width::W256)?;
    let names: Vec<&str> = attack.calls.iter().map(|c| c.function.as_str()).collect();
    ensure!(names == ["withdraw"], "attack is {names:?}");
    let (c, _) = load("dao");
    let eval = EvalConfig { reentrancy_depth: 1, ..EvalConfig::default() };
    let rep = replay(&c, &attack, &StateConfig::default(), &eval).map_err(|e| e.to_string())?;
    let kinds: Vec<&ConcreteKind> = rep.trace.iter().map(|e| &e.kind).collect();
    let big = |k: &ConcreteKind| matches!(k, ConcreteKind::Call { gas, .. } if gas.value() > U256::from(2300));
    let pattern = kinds.windows(2).enumerate().any(|(i, w)| {
        big(w[0]) && big(w[1]) && kinds[i + 2..].iter().any(|k| matches!(k, ConcreteKind::Store { .. }))
    });
    ensure!(pattern, "replay trace lacks call, call (gas > 2300), store: {kinds:?}");
    let s = synth("dao_safe", &["--query", "reentrancy", "--reentrancy-depth", "1"]);
    ensure!(s.code == 1, "dao_safe: exit code {}", s.code);
    ensure!(s.elapsed < Duration::from_secs(30), "dao_safe took {:.1?}", s.elapsed);
    Ok(format!("dao [withdraw] in {:.1?}, dao_safe no-attack in {:.1?}", r.elapsed, s.elapsed))
}

fn timestamp_and_unchecked_send() -> Verdict {
    let t = Instant::now();
    let cases = [
        ("lottery", "timestamp-dep", 0),
        ("fixed_payout", "timestamp-dep", 1),
        ("vesting", "unchecked-send", 0),
        ("vesting_checked", "unchecked-send", 1),
    ];
    for (name, q, want) in cases {
        let r = synth(name, &["--query", q]);
        ensure!(r.code == want, "{name} {q}: exit code {} (want {want})", r.code);
    }
    let dt = t.elapsed();
    ensure!(dt < Duration::from_secs(30), "took {dt:.1?}");
    Ok(format!("4/4 verdicts in {dt:.1?}"))
}

fn faithfulness() -> Verdict {
    let t = Instant::now();
    let shape = VictimShape { methods: 1, max_stmts: 30, max_branches: 2, max_loops: 1, ..VictimShape::default() };
    let cs = victims(404, 200, &shape);
    let results: Vec<Result<(usize, usize), String>> = cs
        .par_iter()
        .enumerate()
        .map_init(
            || Solver::new(SolverConfig::default()),
            |solver, (i, c)| {
                let rows = check_contract(c, &StateConfig::default(), &EvalConfig::default(), solver)
                    .map_err(|e| format!("victim {i}: {e}"))?;
                let (mut same, mut solved) = (0, 0);
                for (what, ag) in rows {
                    if !ag.ok() || ag.unknown > 0 {
                        return Err(format!("victim {i} {what}: {:?}, {} unknown", ag.mismatches, ag.unknown));
                    }
                    same += ag.identical;
                    solved += ag.checks;
                }
                Ok((same, solved))
            },
        )
        .collect();
    let dt = t.elapsed();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    ensure!(failures.is_empty(), "{} of 200 failed, first: {}", failures.len(), failures[0]);
    ensure!(dt < Duration::from_secs(300), "took {dt:.1?}");
    let (same, solved) = results.iter().flatten().fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    Ok(format!("200/200 methods agree in {dt:.1?} ({same} identical terms, {solved} solver-checked)"))
}

const CHOICES: [[usize; 2]; 4] = [[0, 0], [0, 1], [1, 0], [1, 1]];

fn hoisting_completeness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cs = victims(505, 10, &VictimShape::brute_forceable(2));
    let (mut agree, mut positive) = (0, 0);
    for (i, c) in cs.iter().enumerate() {
        let abi = AbiSpec::from_contract(c);
        let t: u64 = rng.gen_range(1..256);
        let q = Query::LargeTransfer { threshold: U256::from(t) };
        let cfg = SynthConfig { prune: false, ..config8() };
        for choice in CHOICES {
            let order: Vec<&str> = choice.iter().map(|&k| abi.components[k].name.as_str()).collect();
            let (outcome, _) = check_program(c, &abi, &q, &cfg, &choice).map_err(|e| e.to_string())?;
            let want = exists_attack(c, &cfg, &order, |r| max_transfer(r).is_some_and(|v| v >= U256::from(t)));
            ensure!(
                outcome != Outcome::Attack || want,
                "victim {i} {order:?} T={t}: synthesized an attack brute force cannot reproduce"
            );
            ensure!(outcome == Outcome::Attack || !want, "victim {i} {order:?} T={t}: {} but an attack exists", outcome.name());
            agree += 1;
            positive += want as usize;
        }
    }
    Ok(format!("{agree}/40 tasks agree ({positive} with attacks)"))
}

fn pruning_soundness() -> Verdict {
    let cs = victims(606, 50, &VictimShape::brute_forceable(2));
    let cfg = config8();
    let (mut rejected, mut programs) = (0, 0);
    for (i, c) in cs.iter().enumerate() {
        let vf = VarFactory::new();
        let sums = attack_synth::summary::summarize_contract(c, Width::W8, &cfg.eval, &vf).map_err(|e| e.to_string())?;
        let fs: Vec<_> = c.public_functions().collect();
        let sketch = make_sketch(&fs, 2, Width::W8, &cfg.eval, &vf).map_err(|e| e.to_string())?;
        for h in hoist(&sketch, 16).map_err(|e| e.to_string())? {
            programs += 1;
            if may_store_and_call(&h, &sums) {
                continue;
            }
            rejected += 1;
            let order: Vec<&str> = h.slots.iter().map(|s| s.function.as_str()).collect();
            ensure!(!exists_attack(c, &cfg, &order, store_before_call), "victim {i} {order:?}: rejected but stores before a call");
        }
    }
    ensure!(rejected > 0, "no program was rejected; the check is vacuous");
    Ok(format!("{rejected} of {programs} programs rejected, 0 violations"))
}

fn best_of(n: usize, f: impl Fn() -> (Outcome, usize)) -> (Duration, Outcome, usize) {
    let mut best = (Duration::MAX, Outcome::NoAttack, 0);
    for _ in 0..n {
        let t = Instant::now();
        let (o, tasks) = f();
        best = (best.0.min(t.elapsed()), o, tasks);
    }
    best
}

fn speedup() -> Verdict {
    let shape = VictimShape { methods: 6, max_stmts: 60, max_branches: 4, max_loops: 1, ..VictimShape::default() };
    let q = Query::TimestampDep;
    // The first victim with no attack, so both modes cover the whole space.
    for seed in 7..17 {
        let c = random_victim(&mut ChaCha8Rng::seed_from_u64(seed), &shape, "Synthetic");
        let abi = AbiSpec::from_contract(&c);
        let run = |mode| {
            let cfg = SynthConfig { max_len: 3, mode, prune: false, jobs: 1, ..SynthConfig::default() };
            let r = synthesize(&c, &abi, &q, &cfg).unwrap();
            (r.outcome, r.stats.tasks)
        };
        let (ts, os, tasks) = best_of(3, || run(EvalMode::Summary));
        if os != Outcome::NoAttack {
            continue;
        }
        let (td, od, _) = best_of(3, || run(EvalMode::Direct));
        ensure!(od == os, "modes disagree: {} vs {}", os.name(), od.name());
        let stmts = c.public_functions().map(|f| f.body.len()).sum::<usize>() / 6;
        let ratio = td.as_secs_f64() / ts.as_secs_f64();
        ensure!(ratio >= 2.0, "seed {seed}: summary {ts:.2?}, direct {td:.2?}, {ratio:.2}x");
        return Ok(format!(
            "seed {seed}, ~{stmts} statements per method, {tasks} tasks: summary {ts:.2?}, direct {td:.2?}, {ratio:.2}x"
        ));
    }
    Err("no attack-free victim among the candidate seeds".into())
}

fn word_var(vf: &VarFactory, name: &str) -> SymVar {
    vf.fresh(Sort::Word(Width::W8), VarOrigin::AttackArg, name)
}

fn random_expr(rng: &mut ChaCha8Rng, x: &SymExpr, y: &SymExpr, depth: u32) -> SymExpr {
    const OPS: [BinOp; 10] =
        [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod, BinOp::BitAnd, BinOp::BitOr, BinOp::BitXor, BinOp::Shl, BinOp::Shr];
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..3) {
            0 => x.clone(),
            1 => y.clone(),
            _ => SymExpr::word_u64(rng.gen_range(0..256), Width::W8),
        };
    }
    let a = random_expr(rng, x, y, depth - 1);
    let b = random_expr(rng, x, y, depth - 1);
    if rng.gen_bool(0.2) {
        let c = SymExpr::bin(BinOp::Lt, random_expr(rng, x, y, depth - 1), random_expr(rng, x, y, depth - 1));
        return SymExpr::ite(c, a, b);
    }
    SymExpr::bin(OPS[rng.gen_range(0..OPS.len())], a, b)
}

/// Changing `x` changes `e` for some `y`, by enumeration.
fn interferes_by_enumeration(e: &SymExpr, x: &SymVar, y: &SymVar) -> bool {
    (0..256u64).any(|yv| {
        let at = |xv: u64| {
            let mut a = Assignment::new();
            a.set(x, CVal::Word(attack_synth::ir::Word::from_u64(xv, Width::W8)));
            a.set(y, CVal::Word(attack_synth::ir::Word::from_u64(yv, Width::W8)));
            e.eval(&a).unwrap()
        };
        let first = at(0);
        (1..256).any(|xv| at(xv) != first)
    })
}

fn interference() -> Verdict {
    let vf = VarFactory::new();
    let mut solver = Solver::new(SolverConfig::default());
    let mut inter = Interference::new();
    let x = vf.fresh(Sort::Word(Width::W256), VarOrigin::AttackArg, "x");
    let xe = SymExpr::var(&x);
    let one = SymExpr::word_u64(1, Width::W256);
    ensure!(inter.check(&mut solver, &x, &SymExpr::add(xe.clone(), one)), "x vs x+1 should interfere");
    ensure!(!inter.check(&mut solver, &x, &SymExpr::word_u64(42, Width::W256)), "x vs 42 should not interfere");
    ensure!(!inter.check(&mut solver, &x, &SymExpr::mul(xe, SymExpr::word_u64(0, Width::W256))), "x vs x*0 should not interfere");

    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (x8, y8) = (word_var(&vf, "x8"), word_var(&vf, "y8"));
    let (xe8, ye8) = (SymExpr::var(&x8), SymExpr::var(&y8));
    let mut positive = 0;
    for i in 0..30 {
        let e = random_expr(&mut rng, &xe8, &ye8, 3);
        let want = interferes_by_enumeration(&e, &x8, &y8);
        let got = inter.check(&mut solver, &x8, &e);
        ensure!(got == want, "expression {i}: solver says {got}, enumeration says {want}");
        positive += want as usize;
    }
    ensure!(inter.unknowns == 0, "{} solver unknowns", inter.unknowns);
    Ok(format!("3 examples, 30/30 random expressions agree ({positive} interfere)"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("batch-overflow end to end", batch_overflow),
        ("reentrancy end to end", reentrancy),
        ("timestamp and unchecked-send verdicts", timestamp_and_unchecked_send),
        ("summary faithfulness", faithfulness),
        ("hoisting completeness", hoisting_completeness),
        ("pruning soundness", pruning_soundness),
        ("summary evaluation speedup", speedup),
        ("interference", interference),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} {tag}: {name}: {detail} [{:.1?}]", i + 1, t.elapsed());
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
