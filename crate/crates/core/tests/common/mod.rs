//! Shared helpers for integration tests: bundled contracts, the 8-bit
//! configuration, and exhaustive enumeration of concrete attacks.

#![allow(dead_code)]

use std::path::PathBuf;

use attack_synth::gen::{random_victim, VictimShape};
use attack_synth::interp::concrete::{replay, ConcreteArg, ConcreteAttack, ConcreteCall, ConcreteKind, Replay};
use attack_synth::interp::EvalConfig;
use attack_synth::ir::word::Word;
use attack_synth::ir::{parse_contract, AbiSpec, Contract, ParamSort, Width};
use attack_synth::state::{CVal, StateConfig};
use attack_synth::synth::SynthConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ruint::aliases::U256;

pub fn contract_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("contracts").join(format!("{name}.ir"))
}

pub fn load(name: &str) -> (Contract, AbiSpec) {
    let c = parse_contract(&std::fs::read_to_string(contract_path(name)).unwrap()).unwrap();
    let abi = AbiSpec::from_contract(&c);
    (c, abi)
}

/// 8-bit words, a fixed sender and timestamp, no re-entry. Under this
/// configuration a concrete attack is just one byte per slot.
pub fn config8() -> SynthConfig {
    let mut cfg = SynthConfig::for_width(Width::W8);
    cfg.state = StateConfig { symbolic_caller: false, timestamp: Some(U256::from(77)), ..StateConfig::with_width(Width::W8) };
    cfg.eval = EvalConfig { reentrancy_depth: 0, ..EvalConfig::for_width(Width::W8) };
    cfg.jobs = 1;
    cfg
}

pub fn victims(seed: u64, n: usize, shape: &VictimShape) -> Vec<Contract> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| random_victim(&mut rng, shape, &format!("V{i}"))).collect()
}

/// Public method names in declaration order.
pub fn methods(c: &Contract) -> Vec<String> {
    c.public_functions().map(|f| f.name.clone()).collect()
}

fn byte(x: u64) -> ConcreteArg {
    ConcreteArg::Scalar(CVal::Word(Word::from_u64(x, Width::W8)))
}

/// Whether some assignment of 8-bit arguments to the calls `order` makes
/// `hit` true of the replay. Every method must take exactly one word.
pub fn exists_attack(c: &Contract, cfg: &SynthConfig, order: &[&str], hit: impl Fn(&Replay) -> bool + Sync) -> bool {
    for name in order {
        let f = c.function(name).unwrap();
        assert!(f.params.len() == 1 && matches!(f.params[0].sort, ParamSort::Word | ParamSort::Address), "{name} is not brute-forceable");
    }
    let total = 256u64.pow(order.len() as u32);
    (0..total).into_par_iter().any(|mut code| {
        let mut calls = Vec::new();
        for name in order {
            calls.push(ConcreteCall { function: name.to_string(), args: vec![byte(code % 256)] });
            code /= 256;
        }
        let attack = ConcreteAttack { calls, caller: None, timestamp: None };
        hit(&replay(c, &attack, &cfg.state, &cfg.eval).unwrap())
    })
}

pub fn max_transfer(r: &Replay) -> Option<U256> {
    r.trace
        .iter()
        .filter_map(|e| match e.kind {
            ConcreteKind::Call { value, selfdestruct: false, .. } => Some(value.value()),
            _ => None,
        })
        .max()
}

/// A store event strictly before a call event.
pub fn store_before_call(r: &Replay) -> bool {
    let first_store = r.trace.iter().position(|e| matches!(e.kind, ConcreteKind::Store { .. }));
    first_store.is_some_and(|i| r.trace[i + 1..].iter().any(|e| matches!(e.kind, ConcreteKind::Call { .. })))
}
