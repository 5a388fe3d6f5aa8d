//! Vulnerability queries over evaluated attack candidates.
//!
//! A query turns a trace into a disjunction. Interference side conditions
//! are decided eagerly with the worker's solver, so each disjunct that
//! survives is a plain quantifier-free formula over the attack arguments.

use std::fmt;
use std::str::FromStr;

use ruint::aliases::U256;
use thiserror::Error;

use crate::interp::{EvalResult, EventKind, TraceEvent};
use crate::smt::{Interference, Solver};
use crate::state::{Environment, SymExpr, SymVar};

/// Longest call/store subsequence the reentrancy query enumerates.
pub const REENTRANCY_TRACE_CAP: usize = 64;

/// Gas needed for the callee to do more than log.
pub const STIPEND: u64 = 2300;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Query {
    BatchOverflow,
    TimestampDep,
    UncheckedSend,
    Reentrancy,
    /// Some call transfers at least `threshold`. Not a vulnerability by
    /// itself; its concrete counterpart is decidable per trace, which makes
    /// it the reference query for exhaustive cross-checks.
    LargeTransfer { threshold: U256 },
}

/// Trace shape a hoisted program must be able to produce for the query to
/// hold; used to skip candidates before evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    StoreThenCall,
    CallThenStore,
    AnyCall,
}

impl Query {
    pub const CATALOG: [Query; 4] = [Query::BatchOverflow, Query::TimestampDep, Query::UncheckedSend, Query::Reentrancy];

    pub fn name(&self) -> String {
        match self {
            Query::BatchOverflow => "batch-overflow".into(),
            Query::TimestampDep => "timestamp-dep".into(),
            Query::UncheckedSend => "unchecked-send".into(),
            Query::Reentrancy => "reentrancy".into(),
            Query::LargeTransfer { threshold } => format!("large-transfer:{threshold}"),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            Query::BatchOverflow => Shape::StoreThenCall,
            Query::Reentrancy => Shape::CallThenStore,
            Query::TimestampDep | Query::UncheckedSend | Query::LargeTransfer { .. } => Shape::AnyCall,
        }
    }

    /// Queries named by a command-line value; `all` is the catalog.
    pub fn parse_list(s: &str) -> Result<Vec<Query>, QueryError> {
        if s == "all" {
            return Ok(Query::CATALOG.to_vec());
        }
        s.split(',').map(|p| p.trim().parse()).collect()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Query {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Query, QueryError> {
        Ok(match s {
            "batch-overflow" => Query::BatchOverflow,
            "timestamp-dep" | "timestamp" => Query::TimestampDep,
            "unchecked-send" => Query::UncheckedSend,
            "reentrancy" => Query::Reentrancy,
            _ => match s.strip_prefix("large-transfer:") {
                Some(t) => Query::LargeTransfer {
                    threshold: crate::ir::word::parse_u256(t).ok_or_else(|| QueryError::Unknown(s.to_string()))?,
                },
                None => return Err(QueryError::Unknown(s.to_string())),
            },
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("unknown query `{0}` (expected batch-overflow, timestamp-dep, unchecked-send, reentrancy, large-transfer:N or all)")]
    Unknown(String),
    #[error("reentrancy query needs at most {cap} call/store events, trace has {len}; lower --max-len or --unroll")]
    TraceTooLong { len: usize, cap: usize },
}

/// One way the query can hold.
#[derive(Clone, Debug)]
pub struct Disjunct {
    pub label: String,
    pub formula: SymExpr,
    /// Trace positions of the events this disjunct claims happen.
    pub events: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct QueryFormula {
    pub disjuncts: Vec<Disjunct>,
}

impl QueryFormula {
    pub fn formula(&self) -> SymExpr {
        SymExpr::or_all(self.disjuncts.iter().map(|d| d.formula.clone()))
    }

    fn push(&mut self, label: String, formula: SymExpr, events: Vec<usize>) {
        if !formula.is_false() {
            self.disjuncts.push(Disjunct { label, formula, events });
        }
    }
}

/// What a query sees of an evaluated candidate.
pub struct QueryInput<'a> {
    pub result: &'a EvalResult,
    /// Attack argument variables of every slot.
    pub args: &'a [SymVar],
    pub env: &'a Environment,
}

impl QueryInput<'_> {
    /// Variables the attacker chooses: the arguments plus the sender when
    /// it is symbolic.
    fn controlled(&self) -> Vec<SymVar> {
        let mut v = self.args.to_vec();
        v.extend(self.env.caller.iter().cloned());
        v
    }

    fn calls(&self) -> impl Iterator<Item = (usize, &TraceEvent)> {
        self.result.trace.iter().enumerate().filter(|(_, e)| matches!(e.kind, EventKind::Call { selfdestruct: false, .. }))
    }
}

fn describe(e: &TraceEvent) -> String {
    format!("{} {} at {}", e.kind.name(), e.tag, e.site)
}

pub fn build(q: &Query, input: &QueryInput, solver: &mut Solver, inter: &mut Interference) -> Result<QueryFormula, QueryError> {
    Ok(match q {
        Query::BatchOverflow => batch_overflow(input, solver, inter),
        Query::TimestampDep => timestamp_dep(input, solver, inter),
        Query::UncheckedSend => unchecked_send(input, solver, inter),
        Query::Reentrancy => reentrancy(input, solver, inter)?,
        Query::LargeTransfer { threshold } => large_transfer(input, *threshold),
    })
}

/// An addition or multiplication wraps, an attacker-controlled operand
/// feeds the transferred value, and the attacker picks both the recipient
/// and the value of that transfer.
pub fn batch_overflow(input: &QueryInput, solver: &mut Solver, inter: &mut Interference) -> QueryFormula {
    let controlled = input.controlled();
    let mut out = QueryFormula::default();
    for (ci, call) in input.calls() {
        let EventKind::Call { addr, value, .. } = &call.kind else { continue };
        if !inter.any(solver, &controlled, addr) || !inter.any(solver, &controlled, value) {
            continue;
        }
        for a in &input.result.arith {
            for r2 in [&a.lhs, &a.rhs] {
                let sources: Vec<SymVar> = r2.support().into_iter().filter(|v| controlled.contains(v)).collect();
                if !inter.any(solver, &sources, value) {
                    continue;
                }
                let f = SymExpr::and_all([call.guard.clone(), a.guard.clone(), SymExpr::gt(r2.clone(), a.result.clone())]);
                let label = format!("{} {} at {} wraps, feeding {}", a.op.symbol(), a.tag, a.site, describe(call));
                out.push(label, f, vec![ci]);
            }
        }
    }
    out
}

/// A positive transfer whose value depends on the block timestamp.
pub fn timestamp_dep(input: &QueryInput, solver: &mut Solver, inter: &mut Interference) -> QueryFormula {
    let mut out = QueryFormula::default();
    let Some(ts) = &input.env.timestamp else { return out };
    for (ci, call) in input.calls() {
        let EventKind::Call { value, .. } = &call.kind else { continue };
        if !inter.check(solver, ts, value) {
            continue;
        }
        let zero = SymExpr::word(crate::ir::Word::zero(input.result.state.width));
        let f = SymExpr::and(call.guard.clone(), SymExpr::gt(value.clone(), zero));
        out.push(format!("timestamp-dependent {}", describe(call)), f, vec![ci]);
    }
    out
}

/// A call whose return value no conditional jump depends on. The
/// interference checks run one by one, so the formula left is just the
/// reachability of such a call.
pub fn unchecked_send(input: &QueryInput, solver: &mut Solver, inter: &mut Interference) -> QueryFormula {
    let mut out = QueryFormula::default();
    let conds: Vec<&SymExpr> = input
        .result
        .trace
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::JumpI { cond } => Some(cond),
            _ => None,
        })
        .collect();
    for (ci, call) in input.calls() {
        let EventKind::Call { ret, .. } = &call.kind else { continue };
        if conds.iter().any(|c| inter.check_term(solver, ret, c)) {
            continue;
        }
        out.push(format!("unchecked {}", describe(call)), call.guard.clone(), vec![ci]);
    }
    out
}

/// Two consecutive calls, the first with more than the stipend and an
/// attacker-chosen recipient, followed later by a store. Consecutive is
/// taken over the events that actually happen: anything recorded between
/// the two calls must be disabled.
pub fn reentrancy(input: &QueryInput, solver: &mut Solver, inter: &mut Interference) -> Result<QueryFormula, QueryError> {
    let controlled = input.controlled();
    let seq: Vec<(usize, &TraceEvent)> = input
        .result
        .trace
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_store() || matches!(e.kind, EventKind::Call { selfdestruct: false, .. }))
        .collect();
    if seq.len() > REENTRANCY_TRACE_CAP {
        return Err(QueryError::TraceTooLong { len: seq.len(), cap: REENTRANCY_TRACE_CAP });
    }
    let mut out = QueryFormula::default();
    let w = input.result.state.width;
    for (p, &(i, first)) in seq.iter().enumerate() {
        let EventKind::Call { gas, addr, .. } = &first.kind else { continue };
        if first.guard.is_false() || !inter.any(solver, &controlled, addr) {
            continue;
        }
        let enough = SymExpr::gt(gas.clone(), SymExpr::word(crate::ir::Word::from_u64(STIPEND, w)));
        let mut between: Vec<SymExpr> = Vec::new();
        for (q, &(j, second)) in seq.iter().enumerate().skip(p + 1) {
            if second.is_call() {
                let stores: Vec<(usize, SymExpr)> =
                    seq[q + 1..].iter().filter(|(_, e)| e.is_store()).map(|(k, e)| (*k, e.guard.clone())).collect();
                if !stores.is_empty() {
                    let later = SymExpr::or_all(stores.iter().map(|(_, g)| g.clone()));
                    let f = SymExpr::and_all(
                        [first.guard.clone(), second.guard.clone(), enough.clone(), later]
                            .into_iter()
                            .chain(between.iter().map(|g| SymExpr::not(g.clone()))),
                    );
                    let label = format!("{} then {} before a store", describe(first), describe(second));
                    out.push(label, f, vec![i, j]);
                }
            }
            between.push(second.guard.clone());
        }
    }
    Ok(out)
}

pub fn large_transfer(input: &QueryInput, threshold: U256) -> QueryFormula {
    let mut out = QueryFormula::default();
    let t = SymExpr::word(crate::ir::Word::new(threshold, input.result.state.width));
    for (ci, call) in input.calls() {
        let EventKind::Call { value, .. } = &call.kind else { continue };
        let f = SymExpr::and(call.guard.clone(), SymExpr::bin(crate::ir::BinOp::Ge, value.clone(), t.clone()));
        out.push(format!("{} transfers at least {threshold}", describe(call)), f, vec![ci]);
    }
    out
}

#[cfg(test)]
mod tests;
