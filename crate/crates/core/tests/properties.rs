//! Property suites that cross the crate's layers: word arithmetic against
//! big integers, symbolic evaluation against concrete replay, and solver
//! models against the formulas they satisfy.

mod common;

use attack_synth::gen::{random_victim, VictimShape};
use attack_synth::interp::concrete::{replay, ConcreteArg, ConcreteAttack, ConcreteCall, ConcreteKind};
use attack_synth::interp::{eval_function, ArgValue, EvalConfig, EventKind, Tag};
use attack_synth::ir::{BinOp, ParamSort, Stmt, Width, Word};
use attack_synth::smt::{SatResult, Solver, SolverConfig};
use attack_synth::state::{apply_binop, initial_state, Assignment, CVal, Sort, StateConfig, SymExpr, VarFactory, VarOrigin};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ruint::aliases::U256;

fn big(x: U256) -> BigUint {
    BigUint::from_bytes_be(&x.to_be_bytes::<32>())
}

fn word_of(x: &BigUint) -> U256 {
    let m: BigUint = x % (BigUint::from(1u8) << 256usize);
    let bytes = m.to_bytes_be();
    let mut buf = [0u8; 32];
    buf[32 - bytes.len()..].copy_from_slice(&bytes);
    U256::from_be_bytes(buf)
}

fn reference(op: BinOp, a: &BigUint, b: &BigUint) -> BigUint {
    let zero = BigUint::from(0u8);
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => (a + (BigUint::from(1u8) << 256usize)) - b,
        BinOp::Mul => a * b,
        BinOp::Div if *b == zero => zero,
        BinOp::Div => a / b,
        BinOp::Mod if *b == zero => zero,
        BinOp::Mod => a % b,
        BinOp::Shl if *b >= BigUint::from(256u16) => zero,
        BinOp::Shl => a << b.to_u64_digits().first().copied().unwrap_or(0),
        BinOp::Shr if *b >= BigUint::from(256u16) => zero,
        BinOp::Shr => a >> b.to_u64_digits().first().copied().unwrap_or(0),
        _ => unreachable!(),
    }
}

fn u256() -> impl Strategy<Value = U256> {
    prop_oneof![
        any::<[u64; 4]>().prop_map(U256::from_limbs),
        (0u64..300).prop_map(U256::from),
        (0usize..256).prop_map(|k| U256::MAX >> k),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn word_arithmetic_is_modular(a in u256(), b in u256(), k in 0usize..7) {
        let ops = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod, BinOp::Shl, BinOp::Shr];
        let w = |x| CVal::Word(Word::new(x, Width::W256));
        let got = apply_binop(ops[k], w(a), w(b)).unwrap();
        let want = word_of(&reference(ops[k], &big(a), &big(b)));
        prop_assert_eq!(got, w(want), "{:?}", ops[k]);
    }
}

fn literal_args(f: &attack_synth::ir::Function, raw: &[u64], width: Width) -> (Vec<ArgValue>, Vec<ConcreteArg>) {
    f.params
        .iter()
        .zip(raw)
        .map(|(p, &x)| match p.sort {
            ParamSort::Bool => (ArgValue::Scalar(SymExpr::bool(x % 2 == 1)), ConcreteArg::Scalar(CVal::Bool(x % 2 == 1))),
            ParamSort::Word | ParamSort::Address => {
                let v = Word::from_u64(x, width);
                (ArgValue::Scalar(SymExpr::word(v)), ConcreteArg::Scalar(CVal::Word(v)))
            }
            ParamSort::WordArray => unreachable!("generated without arrays"),
        })
        .unzip()
}

fn as_word(v: CVal, width: Width) -> Word {
    match v {
        CVal::Word(x) => x,
        CVal::Bool(b) => Word::from_u64(b as u64, width),
    }
}

fn concrete_kind(k: &EventKind, a: &Assignment) -> ConcreteKind {
    let word = |e: &SymExpr| as_word(e.eval(a).unwrap(), e.width().unwrap_or(Width::W256));
    match k {
        EventKind::Call { gas, addr, value, selfdestruct, .. } => {
            ConcreteKind::Call { gas: word(gas), addr: word(addr), value: word(value), selfdestruct: *selfdestruct }
        }
        EventKind::Store { loc, value } => ConcreteKind::Store { loc: word(loc), value: value.eval(a).unwrap() },
        EventKind::JumpI { cond } => ConcreteKind::JumpI { cond: cond.eval(a).unwrap().as_bool().unwrap() },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With literal arguments and environment, the symbolic trace and final
    /// state, read under "every call returns 1", are the concrete ones.
    #[test]
    fn symbolic_evaluation_agrees_with_replay(seed in any::<u64>(), raw in proptest::collection::vec(any::<u64>(), 4), wide in any::<bool>()) {
        let width = if wide { Width::W256 } else { Width::W8 };
        let shape = VictimShape { methods: 2, arrays: false, ..VictimShape::default() };
        let c = random_victim(&mut ChaCha8Rng::seed_from_u64(seed), &shape, "V");
        let state = StateConfig { symbolic_caller: false, timestamp: Some(U256::from(1234)), ..StateConfig::with_width(width) };
        let eval = EvalConfig::for_width(width);
        let fs: Vec<_> = c.public_functions().collect();

        let vf = VarFactory::new();
        let (mut gamma, _) = initial_state(&c, &state, &vf);
        let mut calls = Vec::new();
        let mut sym_trace = Vec::new();
        let mut oks = Vec::new();
        for (slot, f) in fs.iter().enumerate() {
            let (sargs, cargs) = literal_args(f, &raw[2 * slot..], width);
            let r = eval_function(f, &gamma, &sargs, Tag::new(slot, &f.name), &eval).unwrap();
            if r.truncated {
                return Ok(());
            }
            sym_trace.extend(r.trace);
            oks.push(r.path_ok);
            gamma = r.state;
            calls.push(ConcreteCall { function: f.name.clone(), args: cargs });
        }
        let rep = replay(&c, &ConcreteAttack { calls, caller: None, timestamp: None }, &state, &eval).unwrap();

        let a = Assignment { default_zero: true, ..Assignment::new() };
        for (ok, st) in oks.iter().zip(&rep.statuses) {
            prop_assert_eq!(ok.eval(&a).unwrap().as_bool().unwrap(), st.is_completed());
        }
        let enabled: Vec<_> = sym_trace
            .iter()
            .filter(|e| e.guard.eval(&a).unwrap().as_bool().unwrap())
            .map(|e| (e.tag.slot, e.site.to_string(), concrete_kind(&e.kind, &a)))
            .collect();
        let concrete: Vec<_> = rep.trace.iter().map(|e| (e.tag.slot, e.site.to_string(), e.kind.clone())).collect();
        prop_assert_eq!(enabled, concrete);

        let mut covered = Vec::new();
        for (loc, sort) in attack_synth::state::Store::written_locations(&[&gamma.storage]) {
            let k = as_word(loc.eval(&a).unwrap(), width);
            let v = gamma.storage.read(&loc, sort).eval(&a).unwrap();
            prop_assert_eq!(as_word(v, width), as_word(rep.world.load(k), width), "slot {}", k);
            covered.push(k.value());
        }
        for k in rep.world.observable_storage().keys() {
            prop_assert!(covered.contains(k), "concrete write to {k:#x} has no symbolic counterpart");
        }
        prop_assert_eq!(as_word(gamma.globals.balance.eval(&a).unwrap(), width), rep.world.balance);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// A model returned for a satisfiable formula makes it true.
    #[test]
    fn models_satisfy_their_formula(ops in proptest::collection::vec((0usize..8, any::<u8>()), 1..10), target: u8) {
        let vf = VarFactory::new();
        let w = Width::W8;
        let x = vf.fresh(Sort::Word(w), VarOrigin::AttackArg, "x");
        let y = vf.fresh(Sort::Word(w), VarOrigin::AttackArg, "y");
        let table = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::BitAnd, BinOp::BitOr, BinOp::BitXor, BinOp::Div, BinOp::Shr];
        let mut e = SymExpr::var(&x);
        for (k, lit) in ops {
            let rhs = if lit % 3 == 0 { SymExpr::var(&y) } else { SymExpr::word_u64(lit as u64, w) };
            e = SymExpr::bin(table[k], e, rhs);
        }
        let f = SymExpr::eq(e, SymExpr::word_u64(target as u64, w));
        let mut s = Solver::new(SolverConfig::default());
        match s.check(&f) {
            SatResult::Sat(m) => prop_assert_eq!(f.eval(&m), Some(CVal::Bool(true))),
            SatResult::Unsat => {
                let a = |xv: u64, yv: u64| {
                    let mut a = Assignment::new();
                    a.set(&x, CVal::Word(Word::from_u64(xv, w)));
                    a.set(&y, CVal::Word(Word::from_u64(yv, w)));
                    a
                };
                let hit = (0..256).any(|xv| (0..256).any(|yv| f.eval(&a(xv, yv)) == Some(CVal::Bool(true))));
                prop_assert!(!hit, "solver said unsat but a solution exists");
            }
            SatResult::Unknown(why) => prop_assert!(false, "unknown: {why}"),
        }
    }
}

#[test]
fn summaries_are_deterministic_and_bounded() {
    use attack_synth::summary::build_summary;
    for c in common::victims(31, 20, &VictimShape { methods: 2, ..VictimShape::default() }) {
        for f in c.public_functions() {
            let cfg = EvalConfig { reentrancy_depth: 0, ..EvalConfig::default() };
            let a = build_summary(&c, f, Width::W256, &cfg, &VarFactory::new()).unwrap();
            let b = build_summary(&c, f, Width::W256, &cfg, &VarFactory::new()).unwrap();
            assert_eq!(a.to_json(), b.to_json());
            let effects = f.body.iter().filter(|s| matches!(s, Stmt::SStore { .. } | Stmt::Call { .. } | Stmt::SelfDestruct { .. })).count();
            // A loop body runs at most once per allowed back edge plus once.
            assert!(a.entries.len() <= effects * (cfg.unroll + 1), "{}: {} entries for {effects} effect statements", f.name, a.entries.len());
        }
    }
}
