//! Re-entrant withdrawal: the DAO-style contract pays out before zeroing
//! the balance, so one `withdraw` that re-enters is an attack. The variant
//! that zeroes first is clean.

use attack_synth::ir::{parse_abi, parse_contract};
use attack_synth::queries::Query;
use attack_synth::synth::{synthesize, SynthConfig};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/contracts");
    let mut cfg = SynthConfig { max_len: 2, ..SynthConfig::default() };
    cfg.eval.reentrancy_depth = 1;
    for name in ["dao", "dao_safe"] {
        let c = parse_contract(&std::fs::read_to_string(format!("{dir}/{name}.ir")).unwrap()).unwrap();
        let abi = parse_abi(&std::fs::read_to_string(format!("{dir}/{name}.abi.json")).unwrap()).unwrap();
        let r = synthesize(&c, &abi, &Query::Reentrancy, &cfg).unwrap();
        println!("{name}: {} ({} tasks, {:.2?})", r.outcome.name(), r.stats.tasks, r.stats.elapsed);
        for a in &r.attacks {
            println!("  {} via {}", a.program, a.disjunct);
            for line in &a.transcript {
                println!("    {line}");
            }
        }
    }
}
