//! Builds the summary of `vestTokens`, prints it, and applies it to a
//! state where `_amount` is 5.

use attack_synth::interp::{ArgValue, EvalConfig, Tag};
use attack_synth::ir::{parse_contract, Width};
use attack_synth::state::{initial_state, render, StateConfig, SymExpr, VarFactory};
use attack_synth::summary::build_summary;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/contracts/vesting.ir");
    let c = parse_contract(&std::fs::read_to_string(path).unwrap()).unwrap();
    let f = c.function("vestTokens").unwrap();
    let vf = VarFactory::new();
    let cfg = EvalConfig { reentrancy_depth: 0, ..EvalConfig::default() };
    let m = build_summary(&c, f, Width::W256, &cfg, &vf).unwrap();
    println!("{}", serde_json::to_string_pretty(&m.to_json()).unwrap());

    let (gamma, _) = initial_state(&c, &StateConfig { symbolic_caller: false, ..StateConfig::default() }, &vf);
    let to = SymExpr::word_u64(0xBEEF, Width::W256);
    let args = [ArgValue::Scalar(to), ArgValue::Scalar(SymExpr::word_u64(5, Width::W256))];
    let r = m.apply(&gamma, &args, Tag::new(0, &f.name)).unwrap();
    println!("applied with _amount = 5:");
    for e in &r.trace {
        println!("  {}", e);
    }
    println!("  vesting.amount = {}", render(&r.state.sload(&r.state.lit(0))));
}
