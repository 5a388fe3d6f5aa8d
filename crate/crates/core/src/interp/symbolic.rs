//! Merging symbolic evaluation.
//!
//! Pending frames are keyed by (back edges taken, pc). Along any single
//! concrete path that key strictly increases, so popping the smallest key
//! first guarantees every predecessor of a program point has been processed
//! before the point itself, and frames meeting at the same key are merged
//! into one guarded frame.

use std::collections::BTreeMap;

use super::{ArgValue, ArithObs, EvalConfig, EvalError, EvalResult, EventKind, Tag, TraceEvent};
use crate::ir::{BinOp, Expr, Function, JumpTarget, Literal, ParamSort, Stmt, UnOp};
use crate::state::{CallSite, Globals, Kind, ProgramState, Sort, Store, SymExpr, Uf};

/// Where control goes after a statement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Next {
    Pc(usize),
    Exit,
    Revert,
}

/// Successors of a single statement.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub next: Vec<(Next, SymExpr, ProgramState)>,
    pub trace: Vec<TraceEvent>,
    pub arith: Vec<ArithObs>,
}

struct Frame {
    guard: SymExpr,
    st: ProgramState,
}

struct Outcome {
    storage: Store,
    globals: Globals,
    path_ok: SymExpr,
    trace: Vec<TraceEvent>,
    arith: Vec<ArithObs>,
    truncated: bool,
}

struct Invocation<'a> {
    f: &'a Function,
    args: &'a [ArgValue],
    cfg: &'a EvalConfig,
    tag: &'a Tag,
    depth: u32,
    trace: Vec<TraceEvent>,
    arith: Vec<ArithObs>,
    truncated: bool,
}

fn conjuncts(e: &SymExpr, out: &mut Vec<SymExpr>) {
    match e.kind() {
        Kind::Bin(BinOp::And, a, b) => {
            conjuncts(a, out);
            conjuncts(b, out);
        }
        _ => out.push(e.clone()),
    }
}

/// Disjunction of two exclusive guards, plus a selector that is true under
/// the first and false under the second.
fn join_guards(a: &SymExpr, b: &SymExpr) -> (SymExpr, SymExpr) {
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    conjuncts(a, &mut ca);
    conjuncts(b, &mut cb);
    let only_a: Vec<&SymExpr> = ca.iter().filter(|x| !cb.contains(x)).collect();
    let only_b: Vec<&SymExpr> = cb.iter().filter(|x| !ca.contains(x)).collect();
    if let ([x], [y]) = (only_a.as_slice(), only_b.as_slice()) {
        if **x == SymExpr::not((*y).clone()) {
            let common = ca.iter().filter(|c| cb.contains(c)).cloned();
            return (SymExpr::and_all(common), (*x).clone());
        }
    }
    (SymExpr::or(a.clone(), b.clone()), a.clone())
}

fn merge_frames(a: Frame, b: Frame) -> Frame {
    let (guard, sel) = join_guards(&a.guard, &b.guard);
    let w = a.st.width;
    let mut regs = b.st.regs;
    for (k, va) in a.st.regs {
        let v = match regs.get(&k) {
            Some(vb) if vb.sort() == va.sort() => SymExpr::ite(sel.clone(), va, vb.clone()),
            Some(vb) => SymExpr::ite(sel.clone(), va.to_word(w), vb.to_word(w)),
            None => va,
        };
        regs.insert(k, v);
    }
    let st = ProgramState {
        regs,
        memory: Store::merge(&sel, &a.st.memory, &b.st.memory),
        storage: Store::merge(&sel, &a.st.storage, &b.st.storage),
        globals: Globals::merge(&sel, &a.st.globals, &b.st.globals),
        pc: a.st.pc,
        layout: a.st.layout,
        width: w,
    };
    Frame { guard, st }
}

impl<'a> Invocation<'a> {
    fn new(f: &'a Function, args: &'a [ArgValue], cfg: &'a EvalConfig, tag: &'a Tag, depth: u32) -> Self {
        Invocation { f, args, cfg, tag, depth, trace: Vec::new(), arith: Vec::new(), truncated: false }
    }

    fn site(&self, pc: usize) -> CallSite {
        CallSite { function: self.tag.function.clone(), stmt: pc as u32, depth: self.depth }
    }

    fn event(&mut self, guard: &SymExpr, kind: EventKind, pc: usize) {
        let site = self.site(pc);
        self.trace.push(TraceEvent { seq: 0, guard: guard.clone(), kind, tag: self.tag.clone(), site });
    }

    /// Registers and memory holding the arguments.
    fn bind_args(&self, st: &mut ProgramState) -> Result<(), EvalError> {
        let f = self.f;
        if self.args.len() != f.params.len() {
            return Err(EvalError::Arity { function: f.name.clone(), expected: f.params.len(), got: self.args.len() });
        }
        let w = st.width;
        for (i, (p, a)) in f.params.iter().zip(self.args).enumerate() {
            let bad = || EvalError::ArgSort { function: f.name.clone(), index: i, sort: p.sort };
            match (p.sort, a) {
                (ParamSort::Bool, ArgValue::Scalar(e)) => {
                    st.regs.insert(p.name.clone(), e.to_bool());
                }
                (ParamSort::Word | ParamSort::Address, ArgValue::Scalar(e)) => {
                    st.regs.insert(p.name.clone(), e.to_word(w));
                }
                (ParamSort::WordArray, ArgValue::Array { len, elems }) => {
                    let base = super::array_base(i);
                    st.regs.insert(p.name.clone(), st.lit(base));
                    st.regs.insert(crate::ir::array_length_register(&p.name), len.to_word(w));
                    for (j, e) in elems.iter().enumerate() {
                        let present = SymExpr::lt(st.lit(j as u64), len.to_word(w));
                        let v = SymExpr::ite(present, e.to_word(w), st.lit(0));
                        st.memory.write(st.lit(base + j as u64), v);
                    }
                }
                _ => return Err(bad()),
            }
        }
        Ok(())
    }

    fn expr(&mut self, fr: &Frame, e: &Expr, pc: usize) -> Result<SymExpr, EvalError> {
        let w = fr.st.width;
        Ok(match e {
            Expr::Const(Literal::Word(v)) => SymExpr::word_u256(*v, w),
            Expr::Const(Literal::Bool(b)) => SymExpr::bool(*b),
            Expr::Reg(r) => fr.st.regs.get(r).cloned().ok_or_else(|| EvalError::UndefinedRegister {
                function: self.f.name.clone(),
                pc,
                reg: r.clone(),
            })?,
            Expr::Slot { index, .. } => fr.st.lit(*index as u64),
            Expr::Unary(UnOp::Not, a) => SymExpr::not(self.expr(fr, a, pc)?.to_bool()),
            Expr::Binary(op, a, b) => {
                let x = self.expr(fr, a, pc)?;
                let y = self.expr(fr, b, pc)?;
                let (x, y) = if op.is_logical() {
                    (x.to_bool(), y.to_bool())
                } else if matches!(op, BinOp::Eq | BinOp::Ne) && x.sort() == Sort::Bool && y.sort() == Sort::Bool {
                    (x, y)
                } else {
                    (x.to_word(w), y.to_word(w))
                };
                let r = SymExpr::bin(*op, x.clone(), y.clone());
                if matches!(op, BinOp::Add | BinOp::Mul) && !r.is_literal() {
                    self.arith.push(ArithObs {
                        guard: fr.guard.clone(),
                        op: *op,
                        lhs: x,
                        rhs: y,
                        result: r.clone(),
                        tag: self.tag.clone(),
                        site: self.site(pc),
                    });
                }
                r
            }
        })
    }

    fn word(&mut self, fr: &Frame, e: &Expr, pc: usize) -> Result<SymExpr, EvalError> {
        Ok(self.expr(fr, e, pc)?.to_word(fr.st.width))
    }

    fn target(&self, t: &JumpTarget, pc: usize) -> Result<Next, EvalError> {
        match t {
            JumpTarget::Revert => Ok(Next::Revert),
            JumpTarget::Label { index, .. } if *index <= self.f.body.len() => Ok(Next::Pc(*index)),
            JumpTarget::Label { index, .. } => {
                Err(EvalError::BadJump { function: self.f.name.clone(), pc, target: *index })
            }
        }
    }

    fn step(&mut self, mut fr: Frame, pc: usize) -> Result<Vec<(Next, Frame)>, EvalError> {
        let s = &self.f.body[pc];
        let w = fr.st.width;
        if self.cfg.meter_gas {
            let cost = fr.st.lit(self.cfg.gas.cost(s));
            fr.st.globals.gas = SymExpr::sub(fr.st.globals.gas.clone(), cost);
        }
        let next = Next::Pc(pc + 1);
        match s {
            Stmt::Assign { dst, expr } => {
                let v = self.expr(&fr, expr, pc)?;
                fr.st.regs.insert(dst.clone(), v);
            }
            Stmt::MLoad { dst, addr } => {
                let a = self.word(&fr, addr, pc)?;
                let v = fr.st.memory.read(&a, Sort::Word(w));
                fr.st.regs.insert(dst.clone(), v);
            }
            Stmt::MStore { addr, value } => {
                let a = self.word(&fr, addr, pc)?;
                let v = self.word(&fr, value, pc)?;
                fr.st.memory.write(a, v);
            }
            Stmt::SLoad { dst, key } => {
                let loc = self.word(&fr, key, pc)?;
                let v = fr.st.sload(&loc);
                fr.st.regs.insert(dst.clone(), v);
            }
            Stmt::SStore { key, value } => {
                let loc = self.word(&fr, key, pc)?;
                let v = self.expr(&fr, value, pc)?.coerce(fr.st.slot_sort(&loc));
                fr.st.sstore(loc.clone(), v.clone());
                self.event(&fr.guard, EventKind::Store { loc, value: v }, pc);
            }
            Stmt::Sha3 { dst, lhs, rhs } => {
                let a = self.word(&fr, lhs, pc)?;
                let b = self.word(&fr, rhs, pc)?;
                fr.st.regs.insert(dst.clone(), SymExpr::app(Uf::Sha3, vec![a, b], w));
            }
            Stmt::Jump { target } => return Ok(vec![(self.target(target, pc)?, fr)]),
            Stmt::JumpI { target, cond } => {
                let c = self.expr(&fr, cond, pc)?.to_bool();
                let to = self.target(target, pc)?;
                self.event(&fr.guard, EventKind::JumpI { cond: c.clone() }, pc);
                let taken = SymExpr::and(fr.guard.clone(), c.clone());
                let fall = SymExpr::and(fr.guard.clone(), SymExpr::not(c));
                let mut out = Vec::new();
                if !taken.is_false() {
                    out.push((to, Frame { guard: taken, st: fr.st.clone() }));
                }
                if !fall.is_false() {
                    out.push((next, Frame { guard: fall, st: fr.st }));
                }
                return Ok(out);
            }
            Stmt::Call { dst, gas, addr, value } => {
                let g = self.word(&fr, gas, pc)?;
                let a = self.word(&fr, addr, pc)?;
                let v = self.word(&fr, value, pc)?;
                let ret = SymExpr::app(Uf::Call(self.site(pc)), vec![g.clone(), a.clone(), v.clone()], w);
                let kind = EventKind::Call { gas: g.clone(), addr: a, value: v.clone(), ret: ret.clone(), selfdestruct: false };
                self.event(&fr.guard, kind, pc);
                fr.st.globals.balance = SymExpr::sub(fr.st.globals.balance.clone(), v);
                if self.depth < self.cfg.reentrancy_depth {
                    let gate = SymExpr::and(fr.guard.clone(), SymExpr::gt(g.clone(), fr.st.lit(2300)));
                    if !gate.is_false() {
                        let mut entry = fr.st.enter();
                        entry.globals.gas = g;
                        let out = Invocation::new(self.f, self.args, self.cfg, self.tag, self.depth + 1).run(entry, gate)?;
                        fr.st.storage = out.storage;
                        fr.st.globals.balance = out.globals.balance;
                        self.trace.extend(out.trace);
                        self.arith.extend(out.arith);
                        self.truncated |= out.truncated;
                    }
                }
                if let Some(d) = dst {
                    fr.st.regs.insert(d.clone(), ret);
                }
            }
            Stmt::SelfDestruct { addr } => {
                let a = self.word(&fr, addr, pc)?;
                let kind = EventKind::Call {
                    gas: fr.st.lit(0),
                    addr: a,
                    value: fr.st.globals.balance.clone(),
                    ret: fr.st.lit(0),
                    selfdestruct: true,
                };
                self.event(&fr.guard, kind, pc);
                fr.st.globals.balance = fr.st.lit(0);
                return Ok(vec![(Next::Exit, fr)]);
            }
            Stmt::Env { dst, read } => {
                let v = fr.st.globals.get((*read).into()).clone();
                fr.st.regs.insert(dst.clone(), v);
            }
            Stmt::NoOp => {}
            Stmt::Stop => return Ok(vec![(Next::Exit, fr)]),
        }
        Ok(vec![(next, fr)])
    }

    /// Runs the function from `entry` (whose `globals.gas` is the gas
    /// available) under `guard`.
    fn run(mut self, entry: ProgramState, guard: SymExpr) -> Result<Outcome, EvalError> {
        let entry_gas = entry.globals.gas.clone();
        let mut start = entry.enter();
        self.bind_args(&mut start)?;
        let body_len = self.f.body.len();
        let mut pending: BTreeMap<(usize, usize), Frame> = BTreeMap::new();
        pending.insert((0, 0), Frame { guard, st: start });
        let mut exits: Vec<Frame> = Vec::new();

        while let Some(((back, pc), fr)) = pending.pop_first() {
            if fr.guard.is_false() {
                continue;
            }
            if pc >= body_len {
                exits.push(fr);
                continue;
            }
            for (next, out) in self.step(fr, pc)? {
                match next {
                    Next::Pc(t) => {
                        let back = if t <= pc { back + 1 } else { back };
                        if back > self.cfg.unroll {
                            self.truncated = true;
                            continue;
                        }
                        let merged = match pending.remove(&(back, t)) {
                            Some(existing) => merge_frames(existing, out),
                            None => out,
                        };
                        pending.insert((back, t), merged);
                    }
                    Next::Exit => exits.push(out),
                    Next::Revert => {}
                }
            }
        }

        let oks: Vec<SymExpr> = exits
            .iter()
            .map(|e| {
                if self.cfg.meter_gas {
                    SymExpr::and(e.guard.clone(), SymExpr::le(e.st.globals.gas.clone(), entry_gas.clone()))
                } else {
                    e.guard.clone()
                }
            })
            .collect();
        let path_ok = SymExpr::or_all(oks.iter().cloned());
        let mut storage = entry.storage.clone();
        let mut globals = entry.globals.clone();
        for (e, ok) in exits.iter().zip(&oks).rev() {
            storage = Store::merge(ok, &e.st.storage, &storage);
            globals = Globals::merge(ok, &e.st.globals, &globals);
        }
        globals.gas = entry_gas;
        let trace = self
            .trace
            .into_iter()
            .map(|mut ev| {
                ev.guard = SymExpr::and(ev.guard, path_ok.clone());
                ev
            })
            .collect();
        let arith = self
            .arith
            .into_iter()
            .map(|mut a| {
                a.guard = SymExpr::and(a.guard, path_ok.clone());
                a
            })
            .collect();
        Ok(Outcome { storage, globals, path_ok, trace, arith, truncated: self.truncated })
    }
}

/// Evaluates one invocation of `f` from `entry`. Paths that revert or run
/// out of gas leave the state unchanged; every recorded event is guarded
/// by its path condition and by the invocation completing.
pub fn eval_function(
    f: &Function,
    entry: &ProgramState,
    args: &[ArgValue],
    tag: Tag,
    cfg: &EvalConfig,
) -> Result<EvalResult, EvalError> {
    let out = Invocation::new(f, args, cfg, &tag, 0).run(entry.clone(), SymExpr::tt())?;
    let mut state = entry.enter();
    state.storage = out.storage;
    state.globals = out.globals;
    let mut res = EvalResult { state, trace: out.trace, arith: out.arith, path_ok: out.path_ok, truncated: out.truncated };
    res.renumber();
    Ok(res)
}

/// Single statement at `state.pc` under `guard`, without re-entrant
/// inlining. `state.globals.gas` is treated as the gas remaining.
pub fn eval_stmt(
    f: &Function,
    state: &ProgramState,
    guard: &SymExpr,
    tag: Tag,
    cfg: &EvalConfig,
) -> Result<StepResult, EvalError> {
    let pc = state.pc;
    if pc >= f.body.len() {
        return Ok(StepResult {
            next: vec![(Next::Exit, guard.clone(), state.clone())],
            trace: Vec::new(),
            arith: Vec::new(),
        });
    }
    let mut inv = Invocation::new(f, &[], cfg, &tag, cfg.reentrancy_depth);
    let outs = inv.step(Frame { guard: guard.clone(), st: state.clone() }, pc)?;
    let next = outs
        .into_iter()
        .map(|(n, mut fr)| {
            if let Next::Pc(t) = n {
                fr.st.pc = t;
            }
            (n, fr.guard, fr.st)
        })
        .collect();
    Ok(StepResult { next, trace: inv.trace, arith: inv.arith })
}
