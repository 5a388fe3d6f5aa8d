//! Finds the two-step overflow attack on the pausable token: unpause with
//! `makeFlag(true)`, then `batchTransfer` with a value whose product with
//! the receiver count wraps to a small number.

use attack_synth::ir::{parse_abi, parse_contract};
use attack_synth::queries::Query;
use attack_synth::synth::{synthesize, Outcome, SynthConfig};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/contracts");
    let c = parse_contract(&std::fs::read_to_string(format!("{dir}/pausable_token.ir")).unwrap()).unwrap();
    let abi = parse_abi(&std::fs::read_to_string(format!("{dir}/pausable_token.abi.json")).unwrap()).unwrap();

    let cfg = SynthConfig { max_len: 2, ..SynthConfig::default() };
    let report = synthesize(&c, &abi, &Query::BatchOverflow, &cfg).expect("synthesis");
    println!("outcome: {}", report.outcome.name());
    println!("{} hoisted programs, {} pruned, {} solver calls", report.stats.tasks, report.stats.pruned, report.stats.solver_calls);
    if report.outcome == Outcome::Attack {
        let a = &report.attacks[0];
        println!("program {} via {}", a.program, a.disjunct);
        println!("{}", serde_json::to_string_pretty(&a.to_json()["attack"]).unwrap());
        println!("replay:");
        for line in &a.transcript {
            println!("  {line}");
        }
    }
}
