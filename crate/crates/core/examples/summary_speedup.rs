//! Times a length-3 search on a six-method synthetic victim twice: once
//! applying method summaries, once re-evaluating method bodies per slot.

use std::time::Instant;

use attack_synth::gen::{random_victim, VictimShape};
use attack_synth::ir::AbiSpec;
use attack_synth::queries::Query;
use attack_synth::synth::{synthesize, EvalMode, SynthConfig};
use rand::SeedableRng;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7u64);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let shape = VictimShape { methods: 6, max_stmts: 60, max_branches: 4, max_loops: 1, ..VictimShape::default() };
    let c = random_victim(&mut rng, &shape, "Synthetic");
    let abi = AbiSpec::from_contract(&c);
    for f in c.public_functions() {
        println!("{}: {} statements", f.name, f.body.len());
    }
    let q: Query = std::env::args().nth(2).unwrap_or_else(|| "timestamp-dep".into()).parse().unwrap();
    let mut times = Vec::new();
    for mode in [EvalMode::Summary, EvalMode::Direct] {
        let cfg = SynthConfig { max_len: 3, mode, prune: false, jobs: 1, ..SynthConfig::default() };
        let t = Instant::now();
        let r = synthesize(&c, &abi, &q, &cfg).unwrap();
        let dt = t.elapsed();
        println!("{mode:?}: {} in {dt:.2?} ({} tasks, {} solver calls)", r.outcome.name(), r.stats.tasks, r.stats.solver_calls);
        times.push(dt);
    }
    println!("speedup {:.2}x", times[1].as_secs_f64() / times[0].as_secs_f64());
}
