use super::*;
use crate::interp::{eval_function, fresh_args, EvalConfig, Tag};
use crate::ir::{parse_contract, Width};
use crate::smt::SolverConfig;
use crate::state::{initial_state, StateConfig, VarFactory};

struct Run {
    result: EvalResult,
    args: Vec<SymVar>,
    env: Environment,
}

fn run(name: &str, calls: &[&str], cfg: &EvalConfig) -> Run {
    let path = format!("{}/contracts/{name}.ir", env!("CARGO_MANIFEST_DIR"));
    let c = parse_contract(&std::fs::read_to_string(path).unwrap()).unwrap();
    let vf = VarFactory::new();
    let (mut st, env) = initial_state(&c, &StateConfig::default(), &vf);
    let mut trace = Vec::new();
    let mut arith = Vec::new();
    let mut all_args = Vec::new();
    for (slot, f) in calls.iter().enumerate() {
        let f = c.function(f).unwrap();
        let (args, vars) = fresh_args(f, Width::W256, cfg.array_capacity, &vf, &format!("{slot}."));
        let r = eval_function(f, &st, &args, Tag::new(slot, &f.name), cfg).unwrap();
        st = r.state;
        trace.extend(r.trace);
        arith.extend(r.arith);
        all_args.extend(vars);
    }
    let mut result = EvalResult { state: st, trace, arith, path_ok: SymExpr::tt(), truncated: false };
    result.renumber();
    Run { result, args: all_args, env }
}

fn verdict(q: &Query, r: &Run) -> (usize, bool) {
    let mut s = Solver::new(SolverConfig::default());
    let mut i = Interference::new();
    let f = build(q, &QueryInput { result: &r.result, args: &r.args, env: &r.env }, &mut s, &mut i).unwrap();
    let sat = s.check(&f.formula()).is_sat();
    (f.disjuncts.len(), sat)
}

#[test]
fn parse_names_and_lists() {
    assert_eq!(Query::parse_list("all").unwrap().len(), 4);
    assert_eq!(Query::parse_list("reentrancy, timestamp-dep").unwrap(), vec![Query::Reentrancy, Query::TimestampDep]);
    assert_eq!("large-transfer:0x10".parse::<Query>().unwrap(), Query::LargeTransfer { threshold: U256::from(16) });
    assert!("tod".parse::<Query>().is_err());
    for q in Query::CATALOG {
        assert_eq!(q.name().parse::<Query>().unwrap(), q);
    }
}

#[test]
fn timestamp_payout_is_flagged_only_when_it_depends_on_time() {
    let cfg = EvalConfig::default();
    assert_eq!(verdict(&Query::TimestampDep, &run("lottery", &["play"], &cfg)), (1, true));
    assert_eq!(verdict(&Query::TimestampDep, &run("fixed_payout", &["play"], &cfg)).0, 0);
}

#[test]
fn unchecked_send_needs_a_branch_on_the_result() {
    let cfg = EvalConfig::default();
    let (n, sat) = verdict(&Query::UncheckedSend, &run("vesting", &["vestTokens"], &cfg));
    assert!(n >= 1 && sat);
    assert_eq!(verdict(&Query::UncheckedSend, &run("vesting_checked", &["vestTokens"], &cfg)).0, 0);
    // The lottery reverts on a failed call, so its payout is checked.
    assert_eq!(verdict(&Query::UncheckedSend, &run("lottery", &["play"], &cfg)).0, 0);
}

#[test]
fn reentrancy_needs_inlining_and_a_late_store() {
    let cfg = EvalConfig::default();
    let (n, sat) = verdict(&Query::Reentrancy, &run("dao", &["withdraw"], &cfg));
    assert!(n >= 1 && sat);
    // The safe variant clears the balance before calling, so no store follows.
    let (_, sat) = verdict(&Query::Reentrancy, &run("dao_safe", &["withdraw"], &cfg));
    assert!(!sat);
    // Without re-entry a single withdraw has only one call.
    let flat = EvalConfig { reentrancy_depth: 0, ..EvalConfig::default() };
    assert_eq!(verdict(&Query::Reentrancy, &run("dao", &["withdraw"], &flat)).0, 0);
}

#[test]
fn reentrancy_requires_more_than_the_stipend() {
    // The lottery forwards exactly 2300 gas, so re-entry cannot do work.
    let cfg = EvalConfig::default();
    let (_, sat) = verdict(&Query::Reentrancy, &run("lottery", &["play"], &cfg));
    assert!(!sat);
}

#[test]
fn batch_overflow_on_the_token() {
    let cfg = EvalConfig::default();
    let r = run("pausable_token", &["makeFlag", "batchTransfer"], &cfg);
    let (n, sat) = verdict(&Query::BatchOverflow, &r);
    assert!(n >= 1 && sat);
    // The transfer alone cannot run while the token is paused.
    let (_, sat) = verdict(&Query::BatchOverflow, &run("pausable_token", &["batchTransfer"], &cfg));
    assert!(!sat);
}

#[test]
fn calls_with_fixed_values_are_not_batch_overflows() {
    // The lottery's payout does not depend on any argument.
    let (n, _) = verdict(&Query::BatchOverflow, &run("lottery", &["play"], &EvalConfig::default()));
    assert_eq!(n, 0);
}

#[test]
fn long_traces_are_refused() {
    let cfg = EvalConfig::default();
    let one = run("dao", &["deposit"], &cfg);
    let mut r = run("dao", &["deposit"], &cfg);
    while r.result.trace.len() <= REENTRANCY_TRACE_CAP {
        r.result.trace.extend(one.result.trace.iter().cloned());
    }
    let mut s = Solver::new(SolverConfig::default());
    let e = build(&Query::Reentrancy, &QueryInput { result: &r.result, args: &r.args, env: &r.env }, &mut s, &mut Interference::new())
        .unwrap_err();
    assert!(matches!(e, QueryError::TraceTooLong { cap: REENTRANCY_TRACE_CAP, .. }));
}

#[test]
fn large_transfer_threshold() {
    let r = run("lottery", &["play"], &EvalConfig::default());
    let (_, sat) = verdict(&Query::LargeTransfer { threshold: U256::from(1) }, &r);
    assert!(sat);
    let (_, sat) = verdict(&Query::LargeTransfer { threshold: U256::from(2) }, &r);
    assert!(!sat);
}
