//! Attack search: sketches, hoisting, pruning and candidate evaluation.

mod bind;
mod search;

use thiserror::Error;

use crate::interp::{eval_function, fresh_args, ArgValue, EvalConfig, EvalError, EvalResult, Tag};
use crate::ir::{Contract, Function, Width};
use crate::state::{Globals, ProgramState, Store, SymExpr, SymVar, VarFactory, VarOrigin};
use crate::summary::{ApplyError, ContractSummaries, Effect};

pub use bind::{attack_from_json, attack_to_json, bind, validate_replay, Binding, Validation};
pub use search::{check_program, synthesize, AttackReport, EvalMode, Outcome, SynthConfig, SynthStats, SynthesisReport};

/// Upper bound on hoisted programs per sketch length.
pub const DEFAULT_TASK_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("no public components to build attacks from")]
    NoComponents,
    #[error("sketch length must be at least 1")]
    ZeroLength,
    #[error("{n}^{k} = {count} hoisted programs exceed the cap of {cap}; lower --max-len")]
    TooManyTasks { n: usize, k: usize, count: u128, cap: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error("interface mismatch: {0}")]
    Interface(String),
    #[error("no summary for `{0}`")]
    MissingSummary(String),
}

/// One component offered by a hole, with the hole's own argument variables.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub component: usize,
    pub function: String,
    pub args: Vec<ArgValue>,
    pub vars: Vec<SymVar>,
}

/// `K` holes, each a choice among all components.
#[derive(Clone, Debug)]
pub struct Sketch {
    pub components: Vec<String>,
    pub holes: Vec<Vec<Candidate>>,
}

impl Sketch {
    pub fn len(&self) -> usize {
        self.holes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holes.is_empty()
    }
}

pub fn make_sketch(components: &[&Function], k: usize, width: Width, cfg: &EvalConfig, vf: &VarFactory) -> Result<Sketch, SynthError> {
    if components.is_empty() {
        return Err(SynthError::NoComponents);
    }
    if k == 0 {
        return Err(SynthError::ZeroLength);
    }
    let holes = (0..k)
        .map(|slot| {
            components
                .iter()
                .enumerate()
                .map(|(ci, f)| {
                    let (args, vars) = fresh_args(f, width, cfg.array_capacity, vf, &format!("{slot}."));
                    Candidate { component: ci, function: f.name.clone(), args, vars }
                })
                .collect()
        })
        .collect();
    Ok(Sketch { components: components.iter().map(|f| f.name.clone()).collect(), holes })
}

/// A hole after desugaring: option `i` runs when `guards[i]` holds, and
/// exactly one option's guard holds.
#[derive(Clone, Debug)]
pub struct GuardedHole {
    pub choose_vars: Vec<SymVar>,
    pub options: Vec<(SymExpr, Candidate)>,
}

/// `choose(e1, ..., en)` as `if b1 then e1 else if b2 then e2 ... else en`.
pub fn desugar_choose(s: &Sketch, vf: &VarFactory) -> Vec<GuardedHole> {
    s.holes
        .iter()
        .enumerate()
        .map(|(slot, options)| {
            let n = options.len();
            let choose_vars: Vec<SymVar> = (1..n)
                .map(|i| vf.fresh(crate::state::Sort::Bool, VarOrigin::ChooseGuard, format!("b{slot}.{i}")))
                .collect();
            let mut rest = SymExpr::tt();
            let mut out = Vec::new();
            for (i, cand) in options.iter().enumerate() {
                let g = match choose_vars.get(i) {
                    Some(b) => SymExpr::and(rest.clone(), SymExpr::var(b)),
                    None => rest.clone(),
                };
                if let Some(b) = choose_vars.get(i) {
                    rest = SymExpr::and(rest, SymExpr::not(SymExpr::var(b)));
                }
                out.push((g, cand.clone()));
            }
            GuardedHole { choose_vars, options: out }
        })
        .collect()
}

/// A sketch with every hole's method fixed; only arguments stay symbolic.
#[derive(Clone, Debug)]
pub struct HoistedProgram {
    pub index: usize,
    /// Component index per slot.
    pub choice: Vec<usize>,
    pub slots: Vec<Candidate>,
}

impl HoistedProgram {
    pub fn vars(&self) -> Vec<SymVar> {
        self.slots.iter().flat_map(|s| s.vars.iter().cloned()).collect()
    }

    pub fn describe(&self) -> String {
        let names: Vec<&str> = self.slots.iter().map(|s| s.function.as_str()).collect();
        format!("[{}]", names.join("; "))
    }
}

/// All `N^K` method assignments in lexicographic order of component index.
pub fn hoist(s: &Sketch, cap: usize) -> Result<Vec<HoistedProgram>, SynthError> {
    let (n, k) = (s.components.len(), s.len());
    let count = (n as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(SynthError::TooManyTasks { n, k, count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut choice = vec![0usize; k];
    loop {
        let slots = choice.iter().enumerate().map(|(slot, &ci)| s.holes[slot][ci].clone()).collect();
        out.push(HoistedProgram { index: out.len(), choice: choice.clone(), slots });
        // Odometer increment, last slot fastest.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < n {
                break;
            }
            choice[i] = 0;
        }
    }
}

fn order_in(summary: &crate::summary::MethodSummary, first_store: bool) -> bool {
    let mut seen_first = false;
    for e in &summary.entries {
        let is_store = matches!(e.effect, Effect::Store { .. });
        let is_call = !is_store;
        if (first_store && is_store) || (!first_store && is_call) {
            seen_first = true;
        } else if seen_first {
            return true;
        }
    }
    false
}

/// Some slot can store and the same or a later slot can call. Within one
/// slot the store has to precede the call in the summary.
pub fn may_store_and_call(h: &HoistedProgram, sums: &ContractSummaries) -> bool {
    may_in_order(h, sums, true)
}

/// Some slot can call and the same or a later slot can store.
pub fn may_call_and_store(h: &HoistedProgram, sums: &ContractSummaries) -> bool {
    may_in_order(h, sums, false)
}

fn may_in_order(h: &HoistedProgram, sums: &ContractSummaries, store_first: bool) -> bool {
    let mut first_seen = false;
    for slot in &h.slots {
        let Some(m) = sums.get(&slot.function) else { return true };
        let has_store = m.stores().next().is_some();
        let has_call = m.calls().next().is_some();
        let (has_first, has_second) = if store_first { (has_store, has_call) } else { (has_call, has_store) };
        if (first_seen && has_second) || order_in(m, store_first) {
            return true;
        }
        first_seen |= has_first;
    }
    false
}

pub fn may_call(h: &HoistedProgram, sums: &ContractSummaries) -> bool {
    h.slots.iter().any(|s| sums.get(&s.function).map_or(true, |m| m.calls().next().is_some()))
}

/// Solver form of the store-then-call check, for results that still carry
/// choose guards: some store event may precede some call event.
pub fn store_then_call_formula(res: &EvalResult) -> SymExpr {
    let mut disj = Vec::new();
    for (i, s) in res.trace.iter().enumerate().filter(|(_, e)| e.is_store()) {
        for c in res.trace[i + 1..].iter().filter(|e| e.is_call()) {
            disj.push(SymExpr::and(s.guard.clone(), c.guard.clone()));
        }
    }
    SymExpr::or_all(disj)
}

fn concat(mut acc: EvalResult, next: EvalResult) -> EvalResult {
    acc.state = next.state;
    acc.trace.extend(next.trace);
    acc.arith.extend(next.arith);
    acc.path_ok = SymExpr::and(acc.path_ok, next.path_ok);
    acc.truncated |= next.truncated;
    acc
}

fn empty_result(gamma: &ProgramState) -> EvalResult {
    EvalResult { state: gamma.clone(), trace: Vec::new(), arith: Vec::new(), path_ok: SymExpr::tt(), truncated: false }
}

/// Folds the slots' summaries over `gamma0`.
pub fn evaluate_candidate(h: &HoistedProgram, gamma0: &ProgramState, sums: &ContractSummaries) -> Result<EvalResult, SynthError> {
    let mut acc = empty_result(gamma0);
    for (slot, cand) in h.slots.iter().enumerate() {
        let m = sums.get(&cand.function).ok_or_else(|| SynthError::MissingSummary(cand.function.clone()))?;
        let next = m.apply(&acc.state, &cand.args, Tag::new(slot, &cand.function))?;
        acc = concat(acc, next);
    }
    acc.renumber();
    Ok(acc)
}

/// Re-evaluates every slot's method body instead of using summaries.
pub fn evaluate_direct(h: &HoistedProgram, gamma0: &ProgramState, c: &Contract, cfg: &EvalConfig) -> Result<EvalResult, SynthError> {
    let mut acc = empty_result(gamma0);
    for (slot, cand) in h.slots.iter().enumerate() {
        let f = c.function(&cand.function).ok_or_else(|| EvalError::UnknownFunction(cand.function.clone()))?;
        let next = eval_function(f, &acc.state, &cand.args, Tag::new(slot, &cand.function), cfg)?;
        acc = concat(acc, next);
    }
    acc.renumber();
    Ok(acc)
}

/// Evaluates a desugared sketch without hoisting: every hole applies all
/// options to the same incoming state and merges them under the choose
/// guards.
pub fn evaluate_choose(holes: &[GuardedHole], gamma0: &ProgramState, sums: &ContractSummaries) -> Result<EvalResult, SynthError> {
    let mut acc = empty_result(gamma0);
    for (slot, hole) in holes.iter().enumerate() {
        let mut merged: Option<(ProgramState, Vec<_>, Vec<_>, SymExpr)> = None;
        for (g, cand) in hole.options.iter().rev() {
            let m = sums.get(&cand.function).ok_or_else(|| SynthError::MissingSummary(cand.function.clone()))?;
            let r = m.apply(&acc.state, &cand.args, Tag::new(slot, &cand.function))?;
            let trace: Vec<_> = r
                .trace
                .into_iter()
                .map(|mut e| {
                    e.guard = SymExpr::and(g.clone(), e.guard);
                    e
                })
                .collect();
            let arith: Vec<_> = r
                .arith
                .into_iter()
                .map(|mut a| {
                    a.guard = SymExpr::and(g.clone(), a.guard);
                    a
                })
                .collect();
            merged = Some(match merged {
                None => (r.state, trace, arith, r.path_ok),
                Some((st, mut t, mut a, ok)) => {
                    let mut s = st.clone();
                    s.storage = Store::merge(g, &r.state.storage, &st.storage);
                    s.globals = Globals::merge(g, &r.state.globals, &st.globals);
                    let mut tr = trace;
                    tr.append(&mut t);
                    let mut ar = arith;
                    ar.append(&mut a);
                    (s, tr, ar, SymExpr::ite(g.clone(), r.path_ok, ok))
                }
            });
        }
        if let Some((state, trace, arith, path_ok)) = merged {
            acc = concat(acc, EvalResult { state, trace, arith, path_ok, truncated: false });
        }
    }
    acc.renumber();
    Ok(acc)
}
