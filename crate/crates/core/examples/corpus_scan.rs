//! Scans every bundled contract with every query and prints a table, the
//! library-level counterpart of `attack-synth batch`.

use std::path::PathBuf;

use attack_synth::cli::{batch_rows, Common, RunConfig, SearchArgs};

fn main() {
    let dir = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/contracts"));
    let search = SearchArgs { max_len: Some(2), ..SearchArgs::default() };
    let rc = RunConfig::resolve(&Common::default(), Some(&search)).unwrap();
    let rows = batch_rows(&dir, &rc, None).unwrap();
    println!("{:<24} {:<16} {:<12} {:>8} {:>7} {:>7}", "contract", "query", "outcome", "ms", "pruned", "solver");
    for r in rows {
        println!("{:<24} {:<16} {:<12} {:>8} {:>7} {:>7}", r.contract, r.query, r.outcome, r.wall_ms, r.pruned, r.solver_calls);
    }
}
