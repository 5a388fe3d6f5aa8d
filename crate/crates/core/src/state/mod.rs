//! Program states and the symbolic value universe.

mod expr;
mod render;
mod store;

use std::collections::HashMap;
use std::sync::Arc;

use ruint::aliases::U256;
use serde::{Deserialize, Serialize};

use crate::ir::{Contract, EnvRead, Literal, SlotSort, Width, Word};

pub use expr::{
    apply_binop, concrete_app, Assignment, CVal, CallSite, Interpretation, Kind, Sort, Substitution,
    SymExpr, SymVar, Uf, VarFactory, VarOrigin,
};
pub use render::{render, render_all, Rendered};
pub use store::{loc_eq, Base, Store};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalKind {
    Balance,
    Address,
    Timestamp,
    Gas,
    Caller,
}

impl GlobalKind {
    pub const ALL: [GlobalKind; 5] =
        [GlobalKind::Balance, GlobalKind::Address, GlobalKind::Timestamp, GlobalKind::Gas, GlobalKind::Caller];

    pub fn name(self) -> &'static str {
        match self {
            GlobalKind::Balance => "balance",
            GlobalKind::Address => "address",
            GlobalKind::Timestamp => "timestamp",
            GlobalKind::Gas => "gas",
            GlobalKind::Caller => "caller",
        }
    }
}

impl From<EnvRead> for GlobalKind {
    fn from(r: EnvRead) -> Self {
        match r {
            EnvRead::Balance => GlobalKind::Balance,
            EnvRead::Gas => GlobalKind::Gas,
            EnvRead::Address => GlobalKind::Address,
            EnvRead::Timestamp => GlobalKind::Timestamp,
            EnvRead::Caller => GlobalKind::Caller,
        }
    }
}

/// Contract-wide properties. `gas` is the per-transaction budget; gas
/// consumed so far lives in the evaluator.
#[derive(Clone, Debug)]
pub struct Globals {
    pub balance: SymExpr,
    pub address: SymExpr,
    pub timestamp: SymExpr,
    pub gas: SymExpr,
    pub caller: SymExpr,
}

impl Globals {
    pub fn get(&self, k: GlobalKind) -> &SymExpr {
        match k {
            GlobalKind::Balance => &self.balance,
            GlobalKind::Address => &self.address,
            GlobalKind::Timestamp => &self.timestamp,
            GlobalKind::Gas => &self.gas,
            GlobalKind::Caller => &self.caller,
        }
    }

    pub fn set(&mut self, k: GlobalKind, e: SymExpr) {
        match k {
            GlobalKind::Balance => self.balance = e,
            GlobalKind::Address => self.address = e,
            GlobalKind::Timestamp => self.timestamp = e,
            GlobalKind::Gas => self.gas = e,
            GlobalKind::Caller => self.caller = e,
        }
    }

    pub fn merge(guard: &SymExpr, a: &Globals, b: &Globals) -> Globals {
        let mut out = a.clone();
        for k in GlobalKind::ALL {
            out.set(k, SymExpr::ite(guard.clone(), a.get(k).clone(), b.get(k).clone()));
        }
        out
    }
}

/// Registers, memory, storage, globals and program counter.
#[derive(Clone, Debug)]
pub struct ProgramState {
    pub regs: HashMap<String, SymExpr>,
    pub memory: Store,
    pub storage: Store,
    pub globals: Globals,
    pub pc: usize,
    pub layout: Arc<Vec<SlotSort>>,
    pub width: Width,
}

impl ProgramState {
    /// Sort of the value held at a storage location: declared sort for
    /// literal slot indices, word otherwise.
    pub fn slot_sort(&self, loc: &SymExpr) -> Sort {
        let word = Sort::Word(self.width);
        let Some(w) = loc.as_word() else { return word };
        if w.value() >= U256::from(self.layout.len()) {
            return word;
        }
        match self.layout[w.value().to::<usize>()] {
            SlotSort::Bool => Sort::Bool,
            SlotSort::Word | SlotSort::Map => word,
        }
    }

    pub fn sload(&self, loc: &SymExpr) -> SymExpr {
        self.storage.read(loc, self.slot_sort(loc))
    }

    pub fn sstore(&mut self, loc: SymExpr, value: SymExpr) {
        let v = value.coerce(self.slot_sort(&loc));
        self.storage.write(loc, v);
    }

    /// Fresh invocation context: empty registers and memory, pc 0.
    pub fn enter(&self) -> ProgramState {
        ProgramState {
            regs: HashMap::new(),
            memory: Store::new(Base::Zero, self.width),
            storage: self.storage.clone(),
            globals: self.globals.clone(),
            pc: 0,
            layout: self.layout.clone(),
            width: self.width,
        }
    }

    pub fn lit(&self, v: u64) -> SymExpr {
        SymExpr::word_u64(v, self.width)
    }
}

/// How the initial state of an attack is configured.
#[derive(Clone, Debug)]
pub struct StateConfig {
    pub width: Width,
    /// Default attacker address; used when the caller is concrete and as
    /// the replay default.
    pub attacker: U256,
    pub victim_address: U256,
    pub balance: U256,
    /// Fixed block timestamp, or symbolic when `None`.
    pub timestamp: Option<U256>,
    pub gas: U256,
    /// Whether the caller address is a free variable the attack may choose.
    pub symbolic_caller: bool,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig {
            width: Width::W256,
            attacker: U256::from(0xA11CEu64),
            victim_address: U256::from(0xC0FFEEu64),
            balance: U256::from(1_000_000u64),
            timestamp: None,
            gas: U256::from(100_000u64),
            symbolic_caller: true,
        }
    }
}

impl StateConfig {
    /// Small-width configuration for brute-force oracles: concrete values
    /// are truncated to the width.
    pub fn with_width(width: Width) -> StateConfig {
        StateConfig { width, ..StateConfig::default() }
    }
}

fn slot_literal(sort: SlotSort, init: Option<Literal>, width: Width) -> Option<SymExpr> {
    Some(match (sort, init) {
        (SlotSort::Map, _) => return None,
        (_, Some(Literal::Bool(b))) => SymExpr::bool(b).coerce(slot_sort(sort, width)),
        (_, Some(Literal::Word(w))) => SymExpr::word(Word::new(w, width)).coerce(slot_sort(sort, width)),
        (SlotSort::Bool, None) => SymExpr::ff(),
        (SlotSort::Word, None) => SymExpr::word(Word::zero(width)),
    })
}

fn slot_sort(sort: SlotSort, width: Width) -> Sort {
    match sort {
        SlotSort::Bool => Sort::Bool,
        _ => Sort::Word(width),
    }
}

/// Symbolic environment variables of an initial state.
#[derive(Clone, Debug, Default)]
pub struct Environment {
    pub caller: Option<SymVar>,
    pub timestamp: Option<SymVar>,
}

impl Environment {
    pub fn vars(&self) -> Vec<SymVar> {
        self.caller.iter().chain(self.timestamp.iter()).cloned().collect()
    }
}

/// State after running the contract's initializers.
pub fn initial_state(c: &Contract, cfg: &StateConfig, vf: &VarFactory) -> (ProgramState, Environment) {
    let w = cfg.width;
    let mut storage = Store::new(Base::Zero, w);
    for (i, decl) in c.storage.iter().enumerate() {
        if let Some(v) = slot_literal(decl.sort, decl.init, w) {
            storage.write(SymExpr::word_u64(i as u64, w), v);
        }
    }
    let mut env = Environment::default();
    let timestamp = match cfg.timestamp {
        Some(t) => SymExpr::word_u256(t, w),
        None => {
            let v = vf.fresh(Sort::Word(w), VarOrigin::Environment, "timestamp");
            env.timestamp = Some(v.clone());
            SymExpr::var(&v)
        }
    };
    let caller = if cfg.symbolic_caller {
        let v = vf.fresh(Sort::Word(w), VarOrigin::Environment, "caller");
        env.caller = Some(v.clone());
        SymExpr::var(&v)
    } else {
        SymExpr::word_u256(cfg.attacker, w)
    };
    let globals = Globals {
        balance: SymExpr::word_u256(cfg.balance, w),
        address: SymExpr::word_u256(cfg.victim_address, w),
        timestamp,
        gas: SymExpr::word_u256(cfg.gas, w),
        caller,
    };
    let state = ProgramState {
        regs: HashMap::new(),
        memory: Store::new(Base::Zero, w),
        storage,
        globals,
        pc: 0,
        layout: Arc::new(c.storage.iter().map(|s| s.sort).collect()),
        width: w,
    };
    (state, env)
}

/// A snapshot variable's home in the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateLoc {
    Slot(usize),
    Global(GlobalKind),
}

/// Snapshot variables of a fully symbolic state and where they live.
#[derive(Clone, Debug, Default)]
pub struct SnapshotMap {
    pub vars: Vec<(SymVar, StateLoc)>,
}

impl SnapshotMap {
    /// Maps every snapshot variable to the value at its location in `state`.
    pub fn bind(&self, state: &ProgramState) -> Substitution {
        self.vars.iter().map(|(v, loc)| (v.clone(), Self::value(v, *loc, state))).collect()
    }

    /// The value of one snapshot variable in `state`, if `v` is one.
    pub fn lookup(&self, v: &SymVar, state: &ProgramState) -> Option<SymExpr> {
        self.vars.iter().find(|(x, _)| x == v).map(|(v, loc)| Self::value(v, *loc, state))
    }

    fn value(v: &SymVar, loc: StateLoc, state: &ProgramState) -> SymExpr {
        let e = match loc {
            StateLoc::Slot(i) => state.sload(&state.lit(i as u64)),
            StateLoc::Global(k) => state.globals.get(k).clone(),
        };
        e.coerce(v.sort())
    }
}

/// State mapping every scalar slot and every global to a fresh variable.
/// Map slots are covered by the `storage0` base of the store.
pub fn fully_symbolic_state(c: &Contract, width: Width, vf: &VarFactory) -> (ProgramState, SnapshotMap) {
    let mut snap = SnapshotMap::default();
    let mut storage = Store::new(Base::Snapshot, width);
    for (i, decl) in c.storage.iter().enumerate() {
        if decl.sort == SlotSort::Map {
            continue;
        }
        let v = vf.fresh(slot_sort(decl.sort, width), VarOrigin::StorageSnapshot, decl.name.clone());
        storage.write(SymExpr::word_u64(i as u64, width), SymExpr::var(&v));
        snap.vars.push((v, StateLoc::Slot(i)));
    }
    let mut global = |k: GlobalKind| {
        let v = vf.fresh(Sort::Word(width), VarOrigin::GlobalSnapshot, k.name());
        snap.vars.push((v.clone(), StateLoc::Global(k)));
        SymExpr::var(&v)
    };
    let globals = Globals {
        balance: global(GlobalKind::Balance),
        address: global(GlobalKind::Address),
        timestamp: global(GlobalKind::Timestamp),
        gas: global(GlobalKind::Gas),
        caller: global(GlobalKind::Caller),
    };
    let state = ProgramState {
        regs: HashMap::new(),
        memory: Store::new(Base::Zero, width),
        storage,
        globals,
        pc: 0,
        layout: Arc::new(c.storage.iter().map(|s| s.sort).collect()),
        width,
    };
    (state, snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_contract;

    #[test]
    fn initializers_land_in_storage() {
        let c = parse_contract("contract C {\n storage flag: bool = false\n storage n: word\n storage m: map\n}").unwrap();
        let vf = VarFactory::new();
        let (s, env) = initial_state(&c, &StateConfig::default(), &vf);
        assert_eq!(s.sload(&s.lit(0)), SymExpr::ff());
        assert_eq!(s.sload(&s.lit(1)), s.lit(0));
        assert!(env.timestamp.is_some());
        let cfg = StateConfig { timestamp: Some(U256::from(1000u64)), ..StateConfig::default() };
        let (s, env) = initial_state(&c, &cfg, &vf);
        assert_eq!(s.globals.timestamp, s.lit(1000));
        assert!(env.timestamp.is_none());
    }

    #[test]
    fn fully_symbolic_state_counts_slots_and_globals() {
        let c = parse_contract("contract C {\n storage vesting.amount: word\n storage vesting.startTime: word\n}").unwrap();
        let vf = VarFactory::new();
        let (_, a) = fully_symbolic_state(&c, Width::W256, &vf);
        assert_eq!(a.vars.len(), 2 + GlobalKind::ALL.len());
        assert_eq!(vf.allocated(), 7);
        let (_, b) = fully_symbolic_state(&c, Width::W256, &vf);
        assert!(a.vars.iter().all(|(x, _)| b.vars.iter().all(|(y, _)| x != y)));

        let empty = parse_contract("contract E {}").unwrap();
        let (_, e) = fully_symbolic_state(&empty, Width::W256, &vf);
        assert!(e.vars.iter().all(|(_, l)| matches!(l, StateLoc::Global(_))));
    }
}
