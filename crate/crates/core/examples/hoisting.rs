//! The length-2 sketch over the pausable token, its `choose` desugaring,
//! and the hoisted programs with their pruning verdicts.

use attack_synth::interp::EvalConfig;
use attack_synth::ir::{parse_contract, Width};
use attack_synth::state::{render, VarFactory};
use attack_synth::summary::summarize_contract;
use attack_synth::synth::{desugar_choose, hoist, make_sketch, may_call, may_call_and_store, may_store_and_call};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/contracts/pausable_token.ir");
    let c = parse_contract(&std::fs::read_to_string(path).unwrap()).unwrap();
    let cfg = EvalConfig::default();
    let vf = VarFactory::new();
    let fs: Vec<_> = c.public_functions().collect();
    let sketch = make_sketch(&fs, 2, Width::W256, &cfg, &vf).unwrap();
    for (slot, hole) in desugar_choose(&sketch, &vf).iter().enumerate() {
        for (g, cand) in &hole.options {
            println!("slot {slot}: {} when {}", cand.function, render(g));
        }
    }
    let sums = summarize_contract(&c, Width::W256, &cfg, &vf).unwrap();
    println!("{:<32} store-then-call call-then-store call", "program");
    for h in hoist(&sketch, 1 << 16).unwrap() {
        println!(
            "{:<32} {:<15} {:<15} {}",
            h.describe(),
            may_store_and_call(&h, &sums),
            may_call_and_store(&h, &sums),
            may_call(&h, &sums)
        );
    }
}
