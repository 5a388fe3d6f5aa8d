//! Literal interpreter used to replay attacks.
//!
//! Shares no evaluation code with the symbolic engine: values are plain
//! words and booleans, storage is a map from word locations, and every
//! external call returns 1.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use ruint::aliases::U256;
use thiserror::Error;

use super::{array_base, EvalConfig, Tag};
use crate::ir::{
    array_length_register, BinOp, Contract, EnvRead, Expr, Function, JumpTarget, Literal, ParamSort, SlotSort, Stmt,
    UnOp, Width, Word,
};
use crate::state::{CVal, CallSite, StateConfig};

/// Persistent state between transactions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct World {
    pub storage: BTreeMap<U256, CVal>,
    pub balance: Word,
    pub address: Word,
    pub timestamp: Word,
    /// Gas budget of each transaction.
    pub gas: Word,
    pub caller: Word,
    layout: Arc<Vec<SlotSort>>,
    width: Width,
}

fn as_word(v: CVal, w: Width) -> Word {
    match v {
        CVal::Word(x) => x,
        CVal::Bool(true) => Word::one(w),
        CVal::Bool(false) => Word::zero(w),
    }
}

fn as_bool(v: CVal) -> bool {
    match v {
        CVal::Word(x) => !x.is_zero(),
        CVal::Bool(b) => b,
    }
}

impl World {
    pub fn initial(c: &Contract, cfg: &StateConfig, caller: Option<U256>, timestamp: Option<U256>) -> World {
        let w = cfg.width;
        let mut world = World {
            storage: BTreeMap::new(),
            balance: Word::new(cfg.balance, w),
            address: Word::new(cfg.victim_address, w),
            timestamp: Word::new(timestamp.or(cfg.timestamp).unwrap_or(U256::ZERO), w),
            gas: Word::new(cfg.gas, w),
            caller: Word::new(caller.unwrap_or(cfg.attacker), w),
            layout: Arc::new(c.storage.iter().map(|s| s.sort).collect()),
            width: w,
        };
        for (i, decl) in c.storage.iter().enumerate() {
            let v = match (decl.sort, decl.init) {
                (SlotSort::Map, _) | (_, None) => continue,
                (_, Some(Literal::Word(x))) => CVal::Word(Word::new(x, w)),
                (_, Some(Literal::Bool(b))) => CVal::Bool(b),
            };
            let loc = Word::from_u64(i as u64, w);
            world.store(loc, v);
        }
        world
    }

    pub fn width(&self) -> Width {
        self.width
    }

    fn slot_is_bool(&self, loc: Word) -> bool {
        loc.value() < U256::from(self.layout.len()) && self.layout[loc.value().to::<usize>()] == SlotSort::Bool
    }

    fn coerce_slot(&self, loc: Word, v: CVal) -> CVal {
        if self.slot_is_bool(loc) {
            CVal::Bool(as_bool(v))
        } else {
            CVal::Word(as_word(v, self.width))
        }
    }

    pub fn load(&self, loc: Word) -> CVal {
        let v = self.storage.get(&loc.value()).copied().unwrap_or(CVal::Word(Word::zero(self.width)));
        self.coerce_slot(loc, v)
    }

    fn store(&mut self, loc: Word, v: CVal) -> CVal {
        let v = self.coerce_slot(loc, v);
        self.storage.insert(loc.value(), v);
        v
    }

    /// Storage contents with default-valued entries dropped.
    pub fn observable_storage(&self) -> BTreeMap<U256, CVal> {
        self.storage
            .iter()
            .filter(|(_, v)| match v {
                CVal::Word(x) => !x.is_zero(),
                CVal::Bool(b) => *b,
            })
            .map(|(k, v)| (*k, *v))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConcreteArg {
    Scalar(CVal),
    Array { length: Word, elems: Vec<Word> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteCall {
    pub function: String,
    pub args: Vec<ConcreteArg>,
}

/// A fully literal attack: calls plus the environment it runs in.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConcreteAttack {
    pub calls: Vec<ConcreteCall>,
    pub caller: Option<U256>,
    pub timestamp: Option<U256>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConcreteKind {
    Call { gas: Word, addr: Word, value: Word, selfdestruct: bool },
    Store { loc: Word, value: CVal },
    JumpI { cond: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcreteEvent {
    pub kind: ConcreteKind,
    pub tag: Tag,
    pub site: CallSite,
}

impl fmt::Display for ConcreteEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.tag, self.site)?;
        match &self.kind {
            ConcreteKind::Call { gas, addr, value, selfdestruct: false } => {
                write!(f, "call(gas={gas}, addr={addr}, value={value})")
            }
            ConcreteKind::Call { addr, value, .. } => write!(f, "selfdestruct(addr={addr}, value={value})"),
            ConcreteKind::Store { loc, value } => write!(f, "store({loc}, {value})"),
            ConcreteKind::JumpI { cond } => write!(f, "jumpi({cond})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Completed,
    Reverted(String),
}

impl Status {
    pub fn is_completed(&self) -> bool {
        matches!(self, Status::Completed)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("attack calls unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` expects {expected} arguments, got {got}")]
    Arity { function: String, expected: usize, got: usize },
    #[error("`{function}` argument {index} does not match parameter sort {sort}")]
    ArgSort { function: String, index: usize, sort: ParamSort },
}

#[derive(Clone, Debug)]
pub struct Replay {
    pub world: World,
    /// Events of invocations that did not revert, in execution order.
    pub trace: Vec<ConcreteEvent>,
    pub statuses: Vec<Status>,
}

const STEP_LIMIT: usize = 1 << 20;

struct Machine<'a> {
    f: &'a Function,
    args: &'a [ConcreteArg],
    cfg: &'a EvalConfig,
    tag: &'a Tag,
}

struct Revert(String);

impl<'a> Machine<'a> {
    fn eval(&self, regs: &HashMap<String, CVal>, e: &Expr, w: Width) -> Result<CVal, Revert> {
        Ok(match e {
            Expr::Const(Literal::Word(v)) => CVal::Word(Word::new(*v, w)),
            Expr::Const(Literal::Bool(b)) => CVal::Bool(*b),
            Expr::Reg(r) => *regs.get(r).ok_or_else(|| Revert(format!("register `{r}` unset")))?,
            Expr::Slot { index, .. } => CVal::Word(Word::from_u64(*index as u64, w)),
            Expr::Unary(UnOp::Not, a) => CVal::Bool(!as_bool(self.eval(regs, a, w)?)),
            Expr::Binary(op, a, b) => {
                let x = self.eval(regs, a, w)?;
                let y = self.eval(regs, b, w)?;
                binop(*op, x, y, w)
            }
        })
    }

    fn word(&self, regs: &HashMap<String, CVal>, e: &Expr, w: Width) -> Result<Word, Revert> {
        Ok(as_word(self.eval(regs, e, w)?, w))
    }

    fn invoke(&self, world: &mut World, depth: u32, entry_gas: Word, trace: &mut Vec<ConcreteEvent>) -> Status {
        let saved = world.clone();
        let mark = trace.len();
        match self.run(world, depth, entry_gas, trace) {
            Ok(()) => Status::Completed,
            Err(Revert(why)) => {
                *world = saved;
                trace.truncate(mark);
                Status::Reverted(why)
            }
        }
    }

    fn run(&self, world: &mut World, depth: u32, entry_gas: Word, trace: &mut Vec<ConcreteEvent>) -> Result<(), Revert> {
        let w = world.width;
        let lit = |v: u64| Word::from_u64(v, w);
        let mut regs: HashMap<String, CVal> = HashMap::new();
        let mut mem: HashMap<U256, Word> = HashMap::new();
        for (i, (p, a)) in self.f.params.iter().zip(self.args).enumerate() {
            match a {
                ConcreteArg::Scalar(v) => {
                    let v = if p.sort == ParamSort::Bool { CVal::Bool(as_bool(*v)) } else { CVal::Word(as_word(*v, w)) };
                    regs.insert(p.name.clone(), v);
                }
                ConcreteArg::Array { length, elems } => {
                    let base = array_base(i);
                    regs.insert(p.name.clone(), CVal::Word(lit(base)));
                    regs.insert(array_length_register(&p.name), CVal::Word(*length));
                    for (j, e) in elems.iter().enumerate() {
                        let v = if lit(j as u64).value() < length.value() { *e } else { Word::zero(w) };
                        mem.insert(lit(base + j as u64).value(), v);
                    }
                }
            }
        }

        let body = &self.f.body;
        let mut gas = entry_gas;
        let (mut pc, mut back, mut steps) = (0usize, 0usize, 0usize);
        let site = |pc: usize| CallSite { function: self.tag.function.clone(), stmt: pc as u32, depth };
        let event = |trace: &mut Vec<ConcreteEvent>, kind, pc| {
            trace.push(ConcreteEvent { kind, tag: self.tag.clone(), site: site(pc) })
        };
        while pc < body.len() {
            steps += 1;
            if steps > STEP_LIMIT {
                return Err(Revert("step limit".into()));
            }
            let s = &body[pc];
            if self.cfg.meter_gas {
                gas = gas.sub(lit(self.cfg.gas.cost(s)));
            }
            let mut next = pc + 1;
            match s {
                Stmt::Assign { dst, expr } => {
                    let v = self.eval(&regs, expr, w)?;
                    regs.insert(dst.clone(), v);
                }
                Stmt::MLoad { dst, addr } => {
                    let a = self.word(&regs, addr, w)?;
                    let v = mem.get(&a.value()).copied().unwrap_or(Word::zero(w));
                    regs.insert(dst.clone(), CVal::Word(v));
                }
                Stmt::MStore { addr, value } => {
                    let a = self.word(&regs, addr, w)?;
                    let v = self.word(&regs, value, w)?;
                    mem.insert(a.value(), v);
                }
                Stmt::SLoad { dst, key } => {
                    let loc = self.word(&regs, key, w)?;
                    regs.insert(dst.clone(), world.load(loc));
                }
                Stmt::SStore { key, value } => {
                    let loc = self.word(&regs, key, w)?;
                    let v = self.eval(&regs, value, w)?;
                    let v = world.store(loc, v);
                    event(trace, ConcreteKind::Store { loc, value: v }, pc);
                }
                Stmt::Sha3 { dst, lhs, rhs } => {
                    let a = self.word(&regs, lhs, w)?;
                    let b = self.word(&regs, rhs, w)?;
                    regs.insert(dst.clone(), CVal::Word(Word::hash_pair(a, b)));
                }
                Stmt::Jump { target } | Stmt::JumpI { target, .. } => {
                    let taken = match s {
                        Stmt::JumpI { cond, .. } => {
                            let c = as_bool(self.eval(&regs, cond, w)?);
                            event(trace, ConcreteKind::JumpI { cond: c }, pc);
                            c
                        }
                        _ => true,
                    };
                    if taken {
                        match target {
                            JumpTarget::Revert => return Err(Revert(format!("revert at statement {pc}"))),
                            JumpTarget::Label { index, .. } => next = *index,
                        }
                        if next <= pc {
                            back += 1;
                            if back > self.cfg.unroll {
                                return Err(Revert("loop bound exceeded".into()));
                            }
                        }
                    }
                }
                Stmt::Call { dst, gas: g, addr, value } => {
                    let g = self.word(&regs, g, w)?;
                    let a = self.word(&regs, addr, w)?;
                    let v = self.word(&regs, value, w)?;
                    event(trace, ConcreteKind::Call { gas: g, addr: a, value: v, selfdestruct: false }, pc);
                    world.balance = world.balance.sub(v);
                    if depth < self.cfg.reentrancy_depth && g.value() > U256::from(2300u64) {
                        // A reverting re-entrant call only fails the call.
                        self.invoke(world, depth + 1, g, trace);
                    }
                    if let Some(d) = dst {
                        regs.insert(d.clone(), CVal::Word(Word::one(w)));
                    }
                }
                Stmt::SelfDestruct { addr } => {
                    let a = self.word(&regs, addr, w)?;
                    event(trace, ConcreteKind::Call { gas: Word::zero(w), addr: a, value: world.balance, selfdestruct: true }, pc);
                    world.balance = Word::zero(w);
                    break;
                }
                Stmt::Env { dst, read } => {
                    let v = match read {
                        EnvRead::Balance => world.balance,
                        EnvRead::Gas => gas,
                        EnvRead::Address => world.address,
                        EnvRead::Timestamp => world.timestamp,
                        EnvRead::Caller => world.caller,
                    };
                    regs.insert(dst.clone(), CVal::Word(v));
                }
                Stmt::NoOp => {}
                Stmt::Stop => break,
            }
            pc = next;
        }
        if self.cfg.meter_gas && gas.value() > entry_gas.value() {
            return Err(Revert("out of gas".into()));
        }
        Ok(())
    }
}

fn binop(op: BinOp, x: CVal, y: CVal, w: Width) -> CVal {
    use BinOp::*;
    if op.is_logical() {
        let (a, b) = (as_bool(x), as_bool(y));
        return CVal::Bool(if op == And { a && b } else { a || b });
    }
    if let (Eq | Ne, CVal::Bool(a), CVal::Bool(b)) = (op, x, y) {
        return CVal::Bool((a == b) == (op == Eq));
    }
    let (a, b) = (as_word(x, w), as_word(y, w));
    let (p, q) = (a.value(), b.value());
    match op {
        Add => CVal::Word(a.add(b)),
        Sub => CVal::Word(a.sub(b)),
        Mul => CVal::Word(a.mul(b)),
        Div => CVal::Word(a.div(b)),
        Mod => CVal::Word(a.rem(b)),
        BitAnd => CVal::Word(a.bitand(b)),
        BitOr => CVal::Word(a.bitor(b)),
        BitXor => CVal::Word(a.bitxor(b)),
        Shl => CVal::Word(a.shl(b)),
        Shr => CVal::Word(a.shr(b)),
        Lt => CVal::Bool(p < q),
        Gt => CVal::Bool(p > q),
        Le => CVal::Bool(p <= q),
        Ge => CVal::Bool(p >= q),
        Eq => CVal::Bool(p == q),
        Ne => CVal::Bool(p != q),
        And | Or => unreachable!(),
    }
}

fn check_args(f: &Function, args: &[ConcreteArg]) -> Result<(), ReplayError> {
    if args.len() != f.params.len() {
        return Err(ReplayError::Arity { function: f.name.clone(), expected: f.params.len(), got: args.len() });
    }
    for (i, (p, a)) in f.params.iter().zip(args).enumerate() {
        let ok = match a {
            ConcreteArg::Scalar(_) => !p.sort.is_array(),
            ConcreteArg::Array { .. } => p.sort.is_array(),
        };
        if !ok {
            return Err(ReplayError::ArgSort { function: f.name.clone(), index: i, sort: p.sort });
        }
    }
    Ok(())
}

/// One transaction calling `f`. Reverts roll back `world` and drop the
/// invocation's events from `trace`.
pub fn invoke(
    world: &mut World,
    f: &Function,
    args: &[ConcreteArg],
    tag: &Tag,
    cfg: &EvalConfig,
    trace: &mut Vec<ConcreteEvent>,
) -> Result<Status, ReplayError> {
    check_args(f, args)?;
    let m = Machine { f, args, cfg, tag };
    let budget = world.gas;
    Ok(m.invoke(world, 0, budget, trace))
}

/// Runs every call of the attack in order from the initial state.
pub fn replay(
    c: &Contract,
    attack: &ConcreteAttack,
    state: &StateConfig,
    cfg: &EvalConfig,
) -> Result<Replay, ReplayError> {
    let mut world = World::initial(c, state, attack.caller, attack.timestamp);
    let mut trace = Vec::new();
    let mut statuses = Vec::new();
    for (slot, call) in attack.calls.iter().enumerate() {
        let f = c.function(&call.function).ok_or_else(|| ReplayError::UnknownFunction(call.function.clone()))?;
        statuses.push(invoke(&mut world, f, &call.args, &Tag::new(slot, &f.name), cfg, &mut trace)?);
    }
    Ok(Replay { world, trace, statuses })
}
