//! Symbolic and concrete evaluation of contract functions.
//!
//! [`eval_function`] runs a function once over a symbolic state, merging
//! control-flow paths into guarded values, and records the persistent-effect
//! trace. [`concrete`] is an independent literal interpreter used to replay
//! synthesized attacks.

pub mod concrete;
mod symbolic;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{BinOp, Expr, Function, ParamSort, Stmt, Width};
use crate::state::{CallSite, ProgramState, Sort, SymExpr, SymVar, VarFactory, VarOrigin};

pub use symbolic::{eval_function, eval_stmt, Next, StepResult};

/// Per-statement gas costs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct GasTable {
    pub arith: u64,
    pub sload: u64,
    pub sstore: u64,
    pub call: u64,
    pub other: u64,
}

impl Default for GasTable {
    fn default() -> Self {
        GasTable { arith: 5, sload: 200, sstore: 20000, call: 700, other: 3 }
    }
}

fn has_arith(e: &Expr) -> bool {
    match e {
        Expr::Binary(op, a, b) => op.is_arithmetic() || has_arith(a) || has_arith(b),
        Expr::Unary(_, a) => has_arith(a),
        _ => false,
    }
}

impl GasTable {
    pub fn cost(&self, s: &Stmt) -> u64 {
        match s {
            Stmt::Assign { expr, .. } if has_arith(expr) => self.arith,
            Stmt::SLoad { .. } => self.sload,
            Stmt::SStore { .. } => self.sstore,
            Stmt::Call { .. } | Stmt::SelfDestruct { .. } => self.call,
            _ => self.other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Back edges a single invocation may take before the path is cut.
    pub unroll: usize,
    /// How many times a call site re-enters the calling function.
    pub reentrancy_depth: u32,
    pub gas: GasTable,
    pub meter_gas: bool,
    /// Array parameters carry this many symbolic elements.
    pub array_capacity: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { unroll: 4, reentrancy_depth: 1, gas: GasTable::default(), meter_gas: true, array_capacity: 4 }
    }
}

impl EvalConfig {
    /// Defaults for a word width. Gas is not metered below 256 bits since
    /// costs would wrap.
    pub fn for_width(width: Width) -> EvalConfig {
        EvalConfig { meter_gas: width == Width::W256, ..EvalConfig::default() }
    }
}

/// Which attack slot and method an event came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    pub slot: usize,
    pub function: Arc<str>,
}

impl Tag {
    pub fn new(slot: usize, function: &str) -> Tag {
        Tag { slot, function: function.into() }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.function, self.slot)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Call { gas: SymExpr, addr: SymExpr, value: SymExpr, ret: SymExpr, selfdestruct: bool },
    Store { loc: SymExpr, value: SymExpr },
    JumpI { cond: SymExpr },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Call { selfdestruct: false, .. } => "call",
            EventKind::Call { selfdestruct: true, .. } => "selfdestruct",
            EventKind::Store { .. } => "store",
            EventKind::JumpI { .. } => "jumpi",
        }
    }

    pub fn operands(&self) -> Vec<&SymExpr> {
        match self {
            EventKind::Call { gas, addr, value, ret, .. } => vec![gas, addr, value, ret],
            EventKind::Store { loc, value } => vec![loc, value],
            EventKind::JumpI { cond } => vec![cond],
        }
    }

    fn map(&self, mut f: impl FnMut(&SymExpr) -> SymExpr) -> EventKind {
        match self {
            EventKind::Call { gas, addr, value, ret, selfdestruct } => EventKind::Call {
                gas: f(gas),
                addr: f(addr),
                value: f(value),
                ret: f(ret),
                selfdestruct: *selfdestruct,
            },
            EventKind::Store { loc, value } => EventKind::Store { loc: f(loc), value: f(value) },
            EventKind::JumpI { cond } => EventKind::JumpI { cond: f(cond) },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub seq: usize,
    /// Full path condition, including the invocation not reverting.
    pub guard: SymExpr,
    pub kind: EventKind,
    pub tag: Tag,
    pub site: CallSite,
}

impl TraceEvent {
    pub fn is_call(&self) -> bool {
        matches!(self.kind, EventKind::Call { .. })
    }

    pub fn is_store(&self) -> bool {
        matches!(self.kind, EventKind::Store { .. })
    }

    /// Applies `f` to the guard and every operand.
    pub fn map(&self, mut f: impl FnMut(&SymExpr) -> SymExpr) -> TraceEvent {
        TraceEvent {
            seq: self.seq,
            guard: f(&self.guard),
            kind: self.kind.map(&mut f),
            tag: self.tag.clone(),
            site: self.site.clone(),
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} @{}", self.tag, self.site, self.kind.name())?;
        match &self.kind {
            EventKind::Call { gas, addr, value, .. } => write!(f, "({gas}, {addr}, {value})")?,
            EventKind::Store { loc, value } => write!(f, "({loc}, {value})")?,
            EventKind::JumpI { cond } => write!(f, "({cond})")?,
        }
        write!(f, " [{}]", self.guard)
    }
}

/// An addition or multiplication evaluated on a non-literal operand.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArithObs {
    pub guard: SymExpr,
    pub op: BinOp,
    pub lhs: SymExpr,
    pub rhs: SymExpr,
    pub result: SymExpr,
    pub tag: Tag,
    pub site: CallSite,
}

impl ArithObs {
    pub fn map(&self, mut f: impl FnMut(&SymExpr) -> SymExpr) -> ArithObs {
        ArithObs {
            guard: f(&self.guard),
            op: self.op,
            lhs: f(&self.lhs),
            rhs: f(&self.rhs),
            result: f(&self.result),
            tag: self.tag.clone(),
            site: self.site.clone(),
        }
    }
}

/// Outcome of evaluating one or more invocations.
#[derive(Clone, Debug)]
pub struct EvalResult {
    pub state: ProgramState,
    pub trace: Vec<TraceEvent>,
    pub arith: Vec<ArithObs>,
    /// Disjunction of non-reverting path conditions of the last invocation.
    pub path_ok: SymExpr,
    /// Some path was cut by the unroll bound.
    pub truncated: bool,
}

impl EvalResult {
    pub fn renumber(&mut self) {
        for (i, e) in self.trace.iter_mut().enumerate() {
            e.seq = i;
        }
    }
}

/// A symbolic argument.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArgValue {
    Scalar(SymExpr),
    /// Length plus the first `elems.len()` elements.
    Array { len: SymExpr, elems: Vec<SymExpr> },
}

impl ArgValue {
    pub fn exprs(&self) -> Vec<&SymExpr> {
        match self {
            ArgValue::Scalar(e) => vec![e],
            ArgValue::Array { len, elems } => std::iter::once(len).chain(elems).collect(),
        }
    }

    pub fn map(&self, mut f: impl FnMut(&SymExpr) -> SymExpr) -> ArgValue {
        match self {
            ArgValue::Scalar(e) => ArgValue::Scalar(f(e)),
            ArgValue::Array { len, elems } => ArgValue::Array { len: f(len), elems: elems.iter().map(f).collect() },
        }
    }
}

/// Memory address of element 0 of array parameter `index`.
pub fn array_base(index: usize) -> u64 {
    (index as u64 + 1) << 28
}

/// Fresh attack-argument variables for every parameter of `f`.
pub fn fresh_args(f: &Function, width: Width, capacity: usize, vf: &VarFactory, prefix: &str) -> (Vec<ArgValue>, Vec<SymVar>) {
    let mut vars = Vec::new();
    let mut fresh = |sort: Sort, name: String| {
        let v = vf.fresh(sort, VarOrigin::AttackArg, name);
        vars.push(v.clone());
        SymExpr::var(&v)
    };
    let args = f
        .params
        .iter()
        .map(|p| {
            let name = format!("{prefix}{}", p.name);
            match p.sort {
                ParamSort::Bool => ArgValue::Scalar(fresh(Sort::Bool, name)),
                ParamSort::Word | ParamSort::Address => ArgValue::Scalar(fresh(Sort::Word(width), name)),
                ParamSort::WordArray => {
                    let len = fresh(Sort::Word(width), format!("{name}.length"));
                    let elems = (0..capacity).map(|i| fresh(Sort::Word(width), format!("{name}[{i}]"))).collect();
                    ArgValue::Array { len, elems }
                }
            }
        })
        .collect();
    (args, vars)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("function `{0}` not found")]
    UnknownFunction(String),
    #[error("`{function}` expects {expected} arguments, got {got}")]
    Arity { function: String, expected: usize, got: usize },
    #[error("`{function}` argument {index} does not match parameter sort {sort}")]
    ArgSort { function: String, index: usize, sort: ParamSort },
    #[error("`{function}` statement {pc}: jump target {target} outside the body")]
    BadJump { function: String, pc: usize, target: usize },
    #[error("`{function}` statement {pc}: register `{reg}` read before assignment")]
    UndefinedRegister { function: String, pc: usize, reg: String },
}

#[cfg(test)]
mod tests {
    use ruint::aliases::U256;

    use super::concrete::{replay, ConcreteArg, ConcreteAttack, ConcreteCall, ConcreteKind};
    use super::*;
    use crate::ir::{parse_contract, Word};
    use crate::state::{fully_symbolic_state, initial_state, Assignment, CVal, StateConfig};

    const VESTING: &str = include_str!("../../contracts/vesting.ir");
    const PAUSABLE: &str = include_str!("../../contracts/pausable_token.ir");

    fn no_reentry() -> EvalConfig {
        EvalConfig { reentrancy_depth: 0, ..EvalConfig::default() }
    }

    #[test]
    fn vesting_trace_matches_hand_derivation() {
        let c = parse_contract(VESTING).unwrap();
        let f = c.function("vestTokens").unwrap();
        let vf = VarFactory::new();
        let (st, _) = fully_symbolic_state(&c, Width::W256, &vf);
        let (args, vars) = fresh_args(f, Width::W256, 4, &vf, "");
        let res = eval_function(f, &st, &args, Tag::new(0, &f.name), &no_reentry()).unwrap();
        let persistent: Vec<&TraceEvent> = res.trace.iter().filter(|e| !matches!(e.kind, EventKind::JumpI { .. })).collect();
        assert_eq!(persistent.len(), 2);
        let amount = SymExpr::var(&vars[1]);
        let r1 = SymExpr::sub(amount.clone(), SymExpr::word_u64(1, Width::W256));
        match &persistent[0].kind {
            EventKind::Store { loc, value } => {
                assert_eq!(*loc, SymExpr::word_u64(0, Width::W256));
                assert_eq!(*value, r1);
            }
            other => panic!("{other:?}"),
        }
        match &persistent[1].kind {
            EventKind::Call { addr, value, .. } => {
                assert_eq!(*addr, SymExpr::var(&vars[0]));
                assert_eq!(*value, r1);
            }
            other => panic!("{other:?}"),
        }
        // Both guards reduce to `_amount > 0` once the gas budget is known.
        for e in &persistent {
            let gas = st.globals.gas.as_var().unwrap().clone();
            for (a, want) in [(0u64, false), (1, true), (77, true)] {
                let mut asg = Assignment::new();
                asg.default_zero = true;
                asg.set(&vars[1], CVal::Word(Word::from_u64(a, Width::W256)));
                asg.set(&gas, CVal::Word(Word::from_u64(100_000, Width::W256)));
                assert_eq!(e.guard.eval(&asg), Some(CVal::Bool(want)));
            }
        }
    }

    #[test]
    fn noop_body_leaves_state_alone() {
        let c = parse_contract("contract C {\n storage x: word = 3\n public fn f() {\n nop\n }\n}").unwrap();
        let vf = VarFactory::new();
        let (st, _) = initial_state(&c, &StateConfig::default(), &vf);
        let res = eval_function(&c.functions[0], &st, &[], Tag::new(0, "f"), &EvalConfig::default()).unwrap();
        assert!(res.trace.is_empty());
        assert_eq!(res.state.sload(&st.lit(0)), st.lit(3));
        assert_eq!(res.state.globals.balance, st.globals.balance);
        assert!(res.path_ok.is_true());
    }

    #[test]
    fn single_step_assign_and_call() {
        let c = parse_contract(VESTING).unwrap();
        let f = c.function("vestTokens").unwrap();
        let vf = VarFactory::new();
        let (mut st, _) = fully_symbolic_state(&c, Width::W256, &vf);
        let v = vf.fresh(Sort::Word(Width::W256), VarOrigin::AttackArg, "_amount");
        st.regs.insert("_amount".into(), SymExpr::var(&v));
        st.pc = 1;
        let cfg = EvalConfig { meter_gas: false, ..no_reentry() };
        let step = eval_stmt(f, &st, &SymExpr::tt(), Tag::new(0, &f.name), &cfg).unwrap();
        let (next, _, after) = &step.next[0];
        assert_eq!(*next, Next::Pc(2));
        assert_eq!(after.regs["r1"], SymExpr::sub(SymExpr::var(&v), after.lit(1)));

        let mut at_call = after.clone();
        at_call.regs.insert("g".into(), after.lit(2300));
        at_call.regs.insert("_to".into(), after.lit(0x123));
        at_call.pc = 4;
        let step = eval_stmt(f, &at_call, &SymExpr::tt(), Tag::new(0, &f.name), &cfg).unwrap();
        let (_, _, out) = &step.next[0];
        assert!(matches!(out.regs["rc"].kind(), crate::state::Kind::App(crate::state::Uf::Call(_), _)));
        let bal = SymExpr::sub(at_call.globals.balance.clone(), after.regs["r1"].clone());
        assert_eq!(out.globals.balance, bal);
        assert_eq!(step.trace.len(), 1);
    }

    fn fig4b(value: U256, flag: bool) -> ConcreteAttack {
        let w = Width::W256;
        ConcreteAttack {
            calls: vec![
                ConcreteCall { function: "makeFlag".into(), args: vec![ConcreteArg::Scalar(CVal::Bool(flag))] },
                ConcreteCall {
                    function: "batchTransfer".into(),
                    args: vec![
                        ConcreteArg::Array {
                            length: Word::from_u64(2, w),
                            elems: vec![Word::from_u64(0x123, w), Word::from_u64(0x456, w), Word::zero(w), Word::zero(w)],
                        },
                        ConcreteArg::Scalar(CVal::Word(Word::new(value, w))),
                    ],
                },
            ],
            caller: None,
            timestamp: None,
        }
    }

    #[test]
    fn overflowing_batch_transfer_replays() {
        let c = parse_contract(PAUSABLE).unwrap();
        let half = U256::from(1u8) << 255;
        let r = replay(&c, &fig4b(half, true), &StateConfig::default(), &EvalConfig::default()).unwrap();
        assert!(r.statuses.iter().all(|s| s.is_completed()), "{:?}", r.statuses);
        let paid: Vec<Word> = r
            .trace
            .iter()
            .filter_map(|e| match e.kind {
                ConcreteKind::Call { value, .. } => Some(value),
                _ => None,
            })
            .collect();
        assert_eq!(paid, vec![Word::new(half, Width::W256); 2]);

        let r = replay(&c, &fig4b(half, false), &StateConfig::default(), &EvalConfig::default()).unwrap();
        assert!(!r.statuses[1].is_completed());
        assert!(r.trace.iter().all(|e| e.tag.slot == 0));

        let r = replay(&c, &fig4b(U256::from(5u8), true), &StateConfig::default(), &EvalConfig::default()).unwrap();
        assert!(!r.statuses[1].is_completed(), "10 tokens exceed a zero balance");
    }

    #[test]
    fn batch_amount_wraps_symbolically() {
        let c = parse_contract(PAUSABLE).unwrap();
        let f = c.function("batchTransfer").unwrap();
        let vf = VarFactory::new();
        let (mut st, _) = initial_state(&c, &StateConfig::default(), &vf);
        st.sstore(st.lit(0), SymExpr::tt());
        let w = Width::W256;
        let half = SymExpr::word_u256(U256::from(1u8) << 255, w);
        let args = vec![
            ArgValue::Array { len: st.lit(2), elems: vec![st.lit(0x123), st.lit(0x456), st.lit(0), st.lit(0)] },
            ArgValue::Scalar(half.clone()),
        ];
        let res = eval_function(f, &st, &args, Tag::new(0, &f.name), &EvalConfig::default()).unwrap();
        // amount = 2 * 2^255 wraps to 0, so the zero sender balance covers it.
        let debit = res.trace.iter().find_map(|e| match &e.kind {
            EventKind::Store { value, .. } if e.site.stmt == 9 => Some(value.clone()),
            _ => None,
        });
        assert_eq!(debit, Some(st.lit(0)));
        let paid: Vec<&SymExpr> = res
            .trace
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Call { value, .. } if e.guard.is_true() => Some(value),
                _ => None,
            })
            .collect();
        assert_eq!(paid, vec![&half, &half]);
    }

    #[test]
    fn empty_attack_replays_to_initial_world() {
        let c = parse_contract(PAUSABLE).unwrap();
        let cfg = StateConfig::default();
        let r = replay(&c, &ConcreteAttack::default(), &cfg, &EvalConfig::default()).unwrap();
        assert_eq!(r.world, concrete::World::initial(&c, &cfg, None, None));
        assert!(r.trace.is_empty());
    }

    #[test]
    fn gas_never_increases_within_an_invocation() {
        let src = "contract C {\n public fn f(x: word) {\n a := gas\n y := x + 1\n b := gas\n jumpi REVERT b > a\n }\n}";
        let c = parse_contract(src).unwrap();
        for x in [0u64, 5, u64::MAX] {
            let call = ConcreteCall { function: "f".into(), args: vec![ConcreteArg::Scalar(CVal::Word(Word::from_u64(x, Width::W256)))] };
            let attack = ConcreteAttack { calls: vec![call], ..ConcreteAttack::default() };
            let r = replay(&c, &attack, &StateConfig::default(), &EvalConfig::default()).unwrap();
            assert!(r.statuses[0].is_completed());
        }
    }
}
