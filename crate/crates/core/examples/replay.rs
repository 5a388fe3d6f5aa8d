//! Runs a hand-written attack on the concrete interpreter and prints the
//! event trace and final storage.

use attack_synth::interp::concrete::{replay, ConcreteArg, ConcreteAttack, ConcreteCall};
use attack_synth::interp::EvalConfig;
use attack_synth::ir::{parse_contract, Width, Word};
use attack_synth::state::{CVal, StateConfig};
use ruint::aliases::U256;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/contracts/pausable_token.ir");
    let c = parse_contract(&std::fs::read_to_string(path).unwrap()).unwrap();
    let w = Width::W256;
    // Two receivers, each getting 2^255: the product wraps to zero.
    let value = Word::new(U256::from(1) << 255, w);
    let receivers = ConcreteArg::Array { length: Word::from_u64(2, w), elems: vec![Word::from_u64(0xB0B, w), Word::from_u64(0xCAFE, w)] };
    let attack = ConcreteAttack {
        calls: vec![
            ConcreteCall { function: "makeFlag".into(), args: vec![ConcreteArg::Scalar(CVal::Bool(true))] },
            ConcreteCall { function: "batchTransfer".into(), args: vec![receivers, ConcreteArg::Scalar(CVal::Word(value))] },
        ],
        caller: None,
        timestamp: None,
    };
    let r = replay(&c, &attack, &StateConfig::default(), &EvalConfig::default()).unwrap();
    for (call, st) in attack.calls.iter().zip(&r.statuses) {
        println!("{} -> {:?}", call.function, st);
    }
    for e in &r.trace {
        println!("  {e}");
    }
    for (k, v) in r.world.observable_storage() {
        println!("storage[{k:#x}] = {v:?}");
    }
}
