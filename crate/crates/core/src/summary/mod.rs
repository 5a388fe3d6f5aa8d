//! Per-method summaries of persistent effects.
//!
//! A method is evaluated once from a fully symbolic state. Every store,
//! call and selfdestruct it performs becomes an entry guarded by the path
//! condition under which it happens, with all expressions written over the
//! snapshot variables and the parameters. Applying a summary substitutes
//! the current state and the actual arguments into those templates.

mod faithful;

use std::cell::RefCell;
use std::sync::Arc;

use serde::Serialize;

pub use faithful::{check_contract, compare, Agreement};

use crate::interp::{eval_function, fresh_args, ArgValue, ArithObs, EvalConfig, EvalError, EvalResult, EventKind, Tag, TraceEvent};
use crate::ir::{Contract, Function, Width};
use crate::state::{
    fully_symbolic_state, render_all, CallSite, Kind, ProgramState, SnapshotMap, Sort, Substitution, SymExpr, SymVar, Uf,
    VarFactory,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Effect {
    Store { loc: SymExpr, value: SymExpr },
    Call { gas: SymExpr, addr: SymExpr, value: SymExpr, ret: SymExpr },
    SelfDestruct { addr: SymExpr, value: SymExpr },
}

impl Effect {
    pub fn name(&self) -> &'static str {
        match self {
            Effect::Store { .. } => "sum-sstore",
            Effect::Call { .. } => "sum-call",
            Effect::SelfDestruct { .. } => "sum-selfdestruct",
        }
    }

    fn operands(&self) -> Vec<&SymExpr> {
        match self {
            Effect::Store { loc, value } => vec![loc, value],
            Effect::Call { gas, addr, value, ret } => vec![gas, addr, value, ret],
            Effect::SelfDestruct { addr, value } => vec![addr, value],
        }
    }

    fn to_event(&self) -> EventKind {
        match self.clone() {
            Effect::Store { loc, value } => EventKind::Store { loc, value },
            Effect::Call { gas, addr, value, ret } => EventKind::Call { gas, addr, value, ret, selfdestruct: false },
            Effect::SelfDestruct { addr, value } => {
                let zero = SymExpr::word(crate::ir::Word::zero(addr.width().unwrap_or(Width::W256)));
                EventKind::Call { gas: zero.clone(), addr, value, ret: zero, selfdestruct: true }
            }
        }
    }
}

/// `effect @ guard`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryEntry {
    pub effect: Effect,
    pub guard: SymExpr,
    pub site: CallSite,
    /// Position in the method's trace, shared with `branches`.
    pub seq: usize,
}

#[derive(Clone, Debug)]
pub struct MethodSummary {
    pub method: String,
    pub params: Vec<ArgValue>,
    pub param_vars: Vec<SymVar>,
    pub entries: Vec<SummaryEntry>,
    /// Conditional jumps, kept for queries that inspect branch conditions.
    pub branches: Vec<TraceEvent>,
    /// Additions and multiplications, kept for overflow queries.
    pub arith: Vec<ArithObs>,
    pub path_ok: SymExpr,
    /// Storage writes of the whole body, in log order, over the snapshot.
    /// Writes that leave a slot at its snapshot value are dropped.
    pub net_storage: Vec<(SymExpr, SymExpr)>,
    /// Final balance in terms of the snapshot.
    pub net_balance: SymExpr,
    pub snapshot: SnapshotMap,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct ContractSummaries {
    pub width: Width,
    pub methods: Vec<Arc<MethodSummary>>,
}

impl ContractSummaries {
    pub fn get(&self, name: &str) -> Option<&Arc<MethodSummary>> {
        self.methods.iter().find(|m| m.method == name)
    }
}

pub fn build_summary(
    c: &Contract,
    f: &Function,
    width: Width,
    cfg: &EvalConfig,
    vf: &VarFactory,
) -> Result<MethodSummary, EvalError> {
    let (st, snapshot) = fully_symbolic_state(c, width, vf);
    let (params, param_vars) = fresh_args(f, width, cfg.array_capacity, vf, "");
    let res = eval_function(f, &st, &params, Tag::new(0, &f.name), cfg)?;
    let initial = st.storage.entries();
    let net_storage = res.state.storage.entries().iter().filter(|w| !initial.contains(w)).cloned().collect();
    let mut entries = Vec::new();
    let mut branches = Vec::new();
    for ev in res.trace {
        let effect = match ev.kind.clone() {
            EventKind::Store { loc, value } => Effect::Store { loc, value },
            EventKind::Call { gas, addr, value, ret, selfdestruct: false } => Effect::Call { gas, addr, value, ret },
            EventKind::Call { addr, value, selfdestruct: true, .. } => Effect::SelfDestruct { addr, value },
            EventKind::JumpI { .. } => {
                branches.push(ev);
                continue;
            }
        };
        entries.push(SummaryEntry { effect, guard: ev.guard, site: ev.site, seq: ev.seq });
    }
    Ok(MethodSummary {
        method: f.name.clone(),
        params,
        param_vars,
        entries,
        branches,
        arith: res.arith,
        path_ok: res.path_ok,
        net_storage,
        net_balance: res.state.globals.balance,
        snapshot,
        truncated: res.truncated,
    })
}

/// Summaries of every public method, built in parallel.
pub fn summarize_contract(c: &Contract, width: Width, cfg: &EvalConfig, vf: &VarFactory) -> Result<ContractSummaries, EvalError> {
    use rayon::prelude::*;
    let fs: Vec<&Function> = c.public_functions().collect();
    let methods = fs
        .par_iter()
        .map(|f| build_summary(c, f, width, cfg, vf).map(Arc::new))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContractSummaries { width, methods })
}

/// Rewrites a template into the terms of `gamma`: snapshot variables and
/// parameters through `sigma`, unknown initial storage through a read of
/// the current storage.
struct Instantiate<'a> {
    sigma: Substitution,
    snapshot: &'a SnapshotMap,
    gamma: &'a ProgramState,
    memo: RefCell<rustc_hash::FxHashMap<usize, SymExpr>>,
}

impl Instantiate<'_> {
    fn apply(&self, e: &SymExpr) -> SymExpr {
        let mut memo = self.memo.borrow_mut();
        e.transform_shared(&mut memo, |orig, rebuilt| {
            if let Some(v) = orig.as_var() {
                return self.sigma.get(v).cloned().or_else(|| self.snapshot.lookup(v, self.gamma));
            }
            match rebuilt.kind() {
                Kind::App(Uf::StorageBase, args) => Some(self.gamma.storage.read(&args[0], Sort::Word(self.gamma.width))),
                _ => None,
            }
        })
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ApplyError {
    #[error("`{method}` expects {expected} arguments, got {got}")]
    Arity { method: String, expected: usize, got: usize },
    #[error("`{method}` argument {index} has the wrong shape")]
    Shape { method: String, index: usize },
}

impl MethodSummary {
    fn instantiate<'a>(&'a self, gamma: &'a ProgramState, args: &[ArgValue]) -> Result<Instantiate<'a>, ApplyError> {
        if args.len() != self.params.len() {
            return Err(ApplyError::Arity { method: self.method.clone(), expected: self.params.len(), got: args.len() });
        }
        let mut sigma = Substitution::new();
        for (i, (p, a)) in self.params.iter().zip(args).enumerate() {
            let (ps, as_) = (p.exprs(), a.exprs());
            if ps.len() != as_.len() || matches!(p, ArgValue::Scalar(_)) != matches!(a, ArgValue::Scalar(_)) {
                return Err(ApplyError::Shape { method: self.method.clone(), index: i });
            }
            for (t, x) in ps.into_iter().zip(as_) {
                let v = t.as_var().expect("parameter template is a variable");
                sigma.insert(v.clone(), x.coerce(v.sort()));
            }
        }
        Ok(Instantiate { sigma, snapshot: &self.snapshot, gamma, memo: RefCell::default() })
    }

    /// Effects of one invocation on `gamma`, in trace order. Guards and
    /// templates are closed over the invocation-entry state, so all of them
    /// are instantiated against `gamma` as given.
    pub fn apply(&self, gamma: &ProgramState, args: &[ArgValue], tag: Tag) -> Result<EvalResult, ApplyError> {
        let inst = self.instantiate(gamma, args)?;
        let mut state = gamma.enter();
        let mut trace: Vec<TraceEvent> = Vec::new();
        let mut branches = self.branches.iter().peekable();
        for e in &self.entries {
            while let Some(b) = branches.next_if(|b| b.seq < e.seq) {
                let mut ev = b.map(|x| inst.apply(x));
                ev.tag = tag.clone();
                trace.push(ev);
            }
            let guard = inst.apply(&e.guard);
            let effect = match &e.effect {
                Effect::Store { loc, value } => Effect::Store { loc: inst.apply(loc), value: inst.apply(value) },
                Effect::Call { gas, addr, value, ret } => Effect::Call {
                    gas: inst.apply(gas),
                    addr: inst.apply(addr),
                    value: inst.apply(value),
                    ret: inst.apply(ret),
                },
                Effect::SelfDestruct { addr, value } => {
                    Effect::SelfDestruct { addr: inst.apply(addr), value: inst.apply(value) }
                }
            };
            trace.push(TraceEvent { seq: 0, guard, kind: effect.to_event(), tag: tag.clone(), site: e.site.clone() });
        }
        for b in branches {
            let mut ev = b.map(|x| inst.apply(x));
            ev.tag = tag.clone();
            trace.push(ev);
        }
        for (l, v) in &self.net_storage {
            state.storage.write(inst.apply(l), inst.apply(v));
        }
        state.globals.balance = inst.apply(&self.net_balance);
        let arith = self
            .arith
            .iter()
            .map(|a| {
                let mut o = a.map(|x| inst.apply(x));
                o.tag = tag.clone();
                o
            })
            .collect();
        let mut res = EvalResult { state, trace, arith, path_ok: inst.apply(&self.path_ok), truncated: self.truncated };
        res.renumber();
        Ok(res)
    }

    pub fn stores(&self) -> impl Iterator<Item = &SummaryEntry> {
        self.entries.iter().filter(|e| matches!(e.effect, Effect::Store { .. }))
    }

    pub fn calls(&self) -> impl Iterator<Item = &SummaryEntry> {
        self.entries.iter().filter(|e| matches!(e.effect, Effect::Call { .. } | Effect::SelfDestruct { .. }))
    }

    pub fn to_json(&self) -> SummaryJson {
        let mut roots: Vec<SymExpr> = Vec::new();
        for e in &self.entries {
            roots.push(e.guard.clone());
            roots.extend(e.effect.operands().into_iter().cloned());
        }
        let r = render_all(&roots);
        let mut texts = r.exprs.into_iter();
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let guard = texts.next().unwrap_or_default();
                let operands = e.effect.operands().iter().map(|_| texts.next().unwrap_or_default()).collect();
                EntryJson { effect: e.effect.name(), site: e.site.to_string(), guard, operands }
            })
            .collect();
        SummaryJson {
            method: self.method.clone(),
            params: self.param_vars.iter().map(|v| v.name().to_string()).collect(),
            entries,
            shared: r.shared,
            truncated: self.truncated,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct EntryJson {
    pub effect: &'static str,
    pub site: String,
    pub guard: String,
    /// Store: location, value. Call: gas, address, value, return.
    /// Selfdestruct: beneficiary, value.
    pub operands: Vec<String>,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct SummaryJson {
    pub method: String,
    pub params: Vec<String>,
    pub entries: Vec<EntryJson>,
    /// Subterms referenced as `%k` in the entries.
    pub shared: Vec<(String, String)>,
    pub truncated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{parse_contract, Word};
    use crate::state::{initial_state, Assignment, CVal, StateConfig};

    const VESTING: &str = include_str!("../../contracts/vesting.ir");
    const PAUSABLE: &str = include_str!("../../contracts/pausable_token.ir");

    fn no_reentry() -> EvalConfig {
        EvalConfig { reentrancy_depth: 0, ..EvalConfig::default() }
    }

    #[test]
    fn vesting_summary_has_two_entries() {
        let c = parse_contract(VESTING).unwrap();
        let vf = VarFactory::new();
        let s = build_summary(&c, c.function("vestTokens").unwrap(), Width::W256, &no_reentry(), &vf).unwrap();
        assert_eq!(s.entries.len(), 2);
        let amount = SymExpr::var(&s.param_vars[1]);
        let r1 = SymExpr::sub(amount.clone(), SymExpr::word_u64(1, Width::W256));
        assert_eq!(s.entries[0].effect, Effect::Store { loc: SymExpr::word_u64(0, Width::W256), value: r1.clone() });
        match &s.entries[1].effect {
            Effect::Call { addr, value, .. } => {
                assert_eq!(*addr, SymExpr::var(&s.param_vars[0]));
                assert_eq!(*value, r1);
            }
            other => panic!("{other:?}"),
        }
        // Both guards reduce to `_amount > 0` once gas is plentiful.
        let json = s.to_json();
        assert_eq!(json.entries[0].effect, "sum-sstore");
        assert_eq!(json.entries[1].effect, "sum-call");
    }

    #[test]
    fn vesting_applied_to_concrete_amounts() {
        let c = parse_contract(VESTING).unwrap();
        let vf = VarFactory::new();
        let s = build_summary(&c, c.function("vestTokens").unwrap(), Width::W256, &no_reentry(), &vf).unwrap();
        let (g0, _) = initial_state(&c, &StateConfig { symbolic_caller: false, ..StateConfig::default() }, &vf);
        let w = |n| SymExpr::word_u64(n, Width::W256);
        let run = |amount| {
            let args = vec![ArgValue::Scalar(w(0xB0B)), ArgValue::Scalar(w(amount))];
            s.apply(&g0, &args, Tag::new(0, "vestTokens")).unwrap()
        };
        let five = run(5);
        let persistent: Vec<&TraceEvent> = five.trace.iter().filter(|e| !matches!(e.kind, EventKind::JumpI { .. })).collect();
        assert_eq!(persistent.len(), 2);
        assert!(persistent.iter().all(|e| e.guard.is_true()), "{:?}", persistent);
        assert_eq!(five.state.sload(&w(0)), w(4));
        match &persistent[1].kind {
            EventKind::Call { value, .. } => assert_eq!(*value, w(4)),
            other => panic!("{other:?}"),
        }
        let zero = run(0);
        assert!(zero.trace.iter().filter(|e| !matches!(e.kind, EventKind::JumpI { .. })).all(|e| e.guard.is_false()));
        assert_eq!(zero.state.sload(&w(0)), g0.sload(&w(0)));
        assert_eq!(zero.state.globals.balance, g0.globals.balance);
    }

    #[test]
    fn flag_setter_is_one_store() {
        let c = parse_contract(PAUSABLE).unwrap();
        let vf = VarFactory::new();
        let s = build_summary(&c, c.function("makeFlag").unwrap(), Width::W256, &EvalConfig::default(), &vf).unwrap();
        assert_eq!(s.entries.len(), 1);
        match &s.entries[0].effect {
            Effect::Store { loc, value } => {
                assert_eq!(*loc, SymExpr::word_u64(c.slot_index("flag").unwrap() as u64, Width::W256));
                assert_eq!(*value, SymExpr::var(&s.param_vars[0]));
            }
            other => panic!("{other:?}"),
        }
        // Guard is the gas check alone: satisfied by any budget that covers
        // one store.
        let mut a = Assignment::new();
        a.default_zero = true;
        let gas = s.snapshot.vars.iter().find(|(v, _)| v.name() == "gas").unwrap().0.clone();
        a.set(&gas, CVal::Word(Word::from_u64(100_000, Width::W256)));
        assert_eq!(s.entries[0].guard.eval(&a), Some(CVal::Bool(true)));
    }

    #[test]
    fn pure_method_has_no_entries() {
        let c = parse_contract("contract P {\n public fn f(x: word) {\n y := x + 1\n z := y * 2\n }\n}").unwrap();
        let vf = VarFactory::new();
        let s = build_summary(&c, c.function("f").unwrap(), Width::W256, &EvalConfig::default(), &vf).unwrap();
        assert!(s.entries.is_empty());
        assert_eq!(s.arith.len(), 2);
    }
}
