//! Solver-checked agreement between applying a summary and evaluating the
//! method body from the same state.

use std::collections::{BTreeMap, HashMap};

use crate::interp::{EvalResult, EventKind, TraceEvent};
use crate::smt::{SatResult, Solver};
use crate::ir::BinOp;
use crate::state::{Kind, SymExpr};

/// Outcome of one comparison. `identical` counts pairs that were the same
/// term; `checks` counts the rest. `unknown` counts solver answers that
/// were neither sat nor unsat; those are not counted as mismatches.
#[derive(Clone, Debug, Default)]
pub struct Agreement {
    pub mismatches: Vec<String>,
    pub identical: usize,
    pub checks: usize,
    pub unknown: usize,
}

impl Agreement {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn verdict(&mut self, r: Option<bool>, what: impl FnOnce() -> String) {
        self.checks += 1;
        match r {
            Some(true) => {}
            Some(false) => self.mismatches.push(what()),
            None => self.unknown += 1,
        }
    }

    /// Records a mismatch unless `f` is unsatisfiable.
    fn refute(&mut self, solver: &mut Solver, f: SymExpr, what: impl FnOnce() -> String) {
        if f.is_false() {
            return;
        }
        let r = match solver.check(&f) {
            SatResult::Unsat => Some(true),
            SatResult::Sat(_) => Some(false),
            SatResult::Unknown(_) => None,
        };
        self.verdict(r, what);
    }

    fn differ(&mut self, solver: &mut Solver, guard: &SymExpr, a: &SymExpr, b: &SymExpr, what: impl FnOnce() -> String) {
        if a == b {
            self.identical += 1;
        } else {
            let r = equal_under(solver, guard.clone(), a.clone(), b.clone(), SPLIT_DEPTH);
            self.verdict(r, what);
        }
    }
}

/// Case splits before handing a disequality to the solver.
const SPLIT_DEPTH: usize = 8;

fn outer_condition(e: &SymExpr) -> Option<SymExpr> {
    e.post_order().into_iter().rev().find_map(|n| match n.kind() {
        Kind::Ite(c, _, _) => Some(c.clone()),
        _ => None,
    })
}

/// Facts implied by `c = v`: `c` itself, the conjuncts of a true
/// conjunction, the disjuncts of a false disjunction, through negation.
fn implied(c: &SymExpr, v: bool, out: &mut HashMap<SymExpr, SymExpr>) {
    out.insert(c.clone(), SymExpr::bool(v));
    match (c.kind(), v) {
        (Kind::Bin(BinOp::And, x, y), true) | (Kind::Bin(BinOp::Or, x, y), false) => {
            implied(x, v, out);
            implied(y, v, out);
        }
        (Kind::Not(x), _) => implied(x, !v, out),
        _ => {}
    }
}

/// `a` and `b` fold to the same term on every branch of their `ite`
/// conditions. Bit-blasted equivalence of differently associated sums is
/// slow to refute, while most summary/direct differences are only in
/// where the case split sits.
fn equal_by_cases(a: &SymExpr, b: &SymExpr, depth: usize) -> bool {
    if a == b {
        return true;
    }
    if depth == 0 {
        return false;
    }
    let Some(c) = outer_condition(a).or_else(|| outer_condition(b)) else { return false };
    [true, false].into_iter().all(|v| {
        let mut facts = HashMap::new();
        implied(&c, v, &mut facts);
        let sub = |e: &SymExpr| e.transform(|orig, _| facts.get(orig).cloned());
        equal_by_cases(&sub(a), &sub(b), depth - 1)
    })
}

/// Whether `a = b` whenever `path` holds.
fn equal_under(solver: &mut Solver, path: SymExpr, a: SymExpr, b: SymExpr, depth: usize) -> Option<bool> {
    if a == b || path.is_false() || equal_by_cases(&a, &b, depth) {
        return Some(true);
    }
    match solver.check(&SymExpr::and(path, SymExpr::ne(a, b))) {
        SatResult::Unsat => Some(true),
        SatResult::Sat(_) => Some(false),
        SatResult::Unknown(_) => None,
    }
}

fn key(e: &TraceEvent) -> (String, &'static str) {
    (e.site.to_string(), e.kind.name())
}

fn group(trace: &[TraceEvent]) -> BTreeMap<(String, &'static str), Vec<&TraceEvent>> {
    let mut m: BTreeMap<_, Vec<&TraceEvent>> = BTreeMap::new();
    for e in trace.iter().filter(|e| !e.guard.is_false() && !matches!(e.kind, EventKind::JumpI { .. })) {
        m.entry(key(e)).or_default().push(e);
    }
    m
}

/// Compares final storage at every written location, the balance, and the
/// store and call events of the two results. Events are paired by site and
/// occurrence; an event without a partner must be unreachable.
pub fn compare(direct: &EvalResult, applied: &EvalResult, solver: &mut Solver) -> Agreement {
    let mut ag = Agreement::default();
    let (sd, sa) = (&direct.state, &applied.state);
    for (loc, sort) in crate::state::Store::written_locations(&[&sd.storage, &sa.storage]) {
        let (x, y) = (sd.storage.read(&loc, sort), sa.storage.read(&loc, sort));
        ag.differ(solver, &SymExpr::tt(), &x, &y, || format!("storage at {loc} differs"));
    }
    ag.differ(solver, &SymExpr::tt(), &sd.globals.balance, &sa.globals.balance, || "balance differs".into());

    let (gd, ga) = (group(&direct.trace), group(&applied.trace));
    let keys: std::collections::BTreeSet<_> = gd.keys().chain(ga.keys()).cloned().collect();
    let none = Vec::new();
    for k in keys {
        let (xs, ys) = (gd.get(&k).unwrap_or(&none), ga.get(&k).unwrap_or(&none));
        for i in 0..xs.len().max(ys.len()) {
            match (xs.get(i), ys.get(i)) {
                (Some(a), Some(b)) => {
                    if a.guard == b.guard {
                        ag.identical += 1;
                    } else {
                        let xor = SymExpr::ne(a.guard.clone(), b.guard.clone());
                        ag.refute(solver, xor, || format!("guard of {} {} #{i} differs", k.1, k.0));
                    }
                    for (j, (p, q)) in a.kind.operands().into_iter().zip(b.kind.operands()).enumerate() {
                        ag.differ(solver, &a.guard, p, q, || format!("operand {j} of {} {} #{i} differs", k.1, k.0));
                    }
                }
                (Some(e), None) | (None, Some(e)) => {
                    ag.refute(solver, e.guard.clone(), || format!("{} {} #{i} occurs on one side only", k.1, k.0));
                }
                (None, None) => unreachable!(),
            }
        }
    }
    ag
}

/// Checks every public method's summary against direct evaluation, from
/// the initial state and from the state left by each method run with
/// symbolic arguments, so entry states carry symbolic storage and balance.
pub fn check_contract(
    c: &crate::ir::Contract,
    state_cfg: &crate::state::StateConfig,
    cfg: &crate::interp::EvalConfig,
    solver: &mut Solver,
) -> Result<Vec<(String, Agreement)>, crate::interp::EvalError> {
    use crate::interp::{eval_function, fresh_args, Tag};
    use crate::state::{initial_state, VarFactory};

    let vf = VarFactory::new();
    let w = state_cfg.width;
    let sums = super::summarize_contract(c, w, cfg, &vf)?;
    let (g0, _) = initial_state(c, state_cfg, &vf);
    let mut entries = vec![("initial".to_string(), g0.clone())];
    for f in c.public_functions() {
        let (args, _) = fresh_args(f, w, cfg.array_capacity, &vf, "pre.");
        let r = eval_function(f, &g0, &args, Tag::new(0, &f.name), cfg)?;
        entries.push((format!("after {}", f.name), r.state));
    }
    let mut out = Vec::new();
    for f in c.public_functions() {
        let m = sums.get(&f.name).expect("summary per public method");
        for (label, gamma) in &entries {
            let (args, _) = fresh_args(f, w, cfg.array_capacity, &vf, "x.");
            let direct = eval_function(f, gamma, &args, Tag::new(1, &f.name), cfg)?;
            let applied = m.apply(gamma, &args, Tag::new(1, &f.name)).expect("arguments match the summary");
            out.push((format!("{} {label}", f.name), compare(&direct, &applied, solver)));
        }
    }
    Ok(out)
}
