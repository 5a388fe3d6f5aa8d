//! Timestamp dependence and unchecked sends on the bundled positive and
//! negative contracts.

use attack_synth::ir::{parse_abi, parse_contract};
use attack_synth::queries::Query;
use attack_synth::synth::{synthesize, SynthConfig};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/contracts");
    let cases = [
        ("lottery", Query::TimestampDep),
        ("fixed_payout", Query::TimestampDep),
        ("vesting", Query::UncheckedSend),
        ("vesting_checked", Query::UncheckedSend),
    ];
    let cfg = SynthConfig { max_len: 2, ..SynthConfig::default() };
    for (name, q) in cases {
        let c = parse_contract(&std::fs::read_to_string(format!("{dir}/{name}.ir")).unwrap()).unwrap();
        let abi = parse_abi(&std::fs::read_to_string(format!("{dir}/{name}.abi.json")).unwrap()).unwrap();
        let r = synthesize(&c, &abi, &q, &cfg).unwrap();
        let how = r.attacks.first().map(|a| format!(": {} via {}", a.program, a.disjunct)).unwrap_or_default();
        println!("{name:16} {:15} {}{how}", q.name(), r.outcome.name());
    }
}
