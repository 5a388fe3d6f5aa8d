mod common;

use std::process::{Command, Output};

use common::contract_path;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attack-synth")).args(args).env_remove("ATTACK_SYNTH_QUERY").output().unwrap()
}

fn path(name: &str) -> String {
    contract_path(name).to_str().unwrap().to_string()
}

#[test]
fn exit_codes_follow_the_outcome() {
    let attack = run(&["synth", "--contract", &path("lottery"), "--query", "timestamp-dep", "--max-len", "1"]);
    assert_eq!(attack.status.code(), Some(0));
    let clean = run(&["synth", "--contract", &path("no_store"), "--query", "all", "--max-len", "1"]);
    assert_eq!(clean.status.code(), Some(1));
    let missing = run(&["synth", "--contract", "/nonexistent.ir"]);
    assert_eq!(missing.status.code(), Some(3));
    let bad_query = run(&["synth", "--contract", &path("lottery"), "--query", "front-running"]);
    assert_eq!(bad_query.status.code(), Some(3));
}

#[test]
fn a_synthesized_attack_replays_through_exec() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run(&[
        "synth",
        "--contract",
        &path("vesting"),
        "--query",
        "unchecked-send",
        "--max-len",
        "1",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let entry = &v["reports"][0]["attacks"][0];
    let attack = dir.path().join("attack.json");
    std::fs::write(&attack, entry.to_string()).unwrap();
    let exec = run(&["exec", "--contract", &path("vesting"), "--attack", attack.to_str().unwrap()]);
    assert_eq!(exec.status.code(), Some(0));
    let text = String::from_utf8(exec.stdout).unwrap();
    assert!(text.contains("vestTokens -> Completed"), "{text}");
    assert!(text.contains("call("), "{text}");
}

#[test]
fn exec_rejects_unknown_functions() {
    let dir = tempfile::tempdir().unwrap();
    let attack = dir.path().join("attack.json");
    std::fs::write(&attack, r#"{"calls":[{"function":"steal","args":[]}]}"#).unwrap();
    let exec = run(&["exec", "--contract", &path("vesting"), "--attack", attack.to_str().unwrap()]);
    assert_eq!(exec.status.code(), Some(3));
}

#[test]
fn summarize_lists_every_public_method() {
    let out = run(&["summarize", "--contract", &path("dao")]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["deposit", "withdraw"]);
}

#[test]
fn batch_writes_one_row_per_contract_and_query() {
    let corpus = tempfile::tempdir().unwrap();
    for name in ["lottery", "fixed_payout", "no_store"] {
        for ext in ["ir", "abi.json"] {
            let src = contract_path(name).with_extension(ext);
            std::fs::copy(&src, corpus.path().join(format!("{name}.{ext}"))).unwrap();
        }
    }
    std::fs::write(corpus.path().join("broken.ir"), "contract {").unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "batch",
        "--dir",
        corpus.path().to_str().unwrap(),
        "--query",
        "timestamp-dep,unchecked-send",
        "--max-len",
        "1",
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rows = csv::Reader::from_path(out_dir.path().join("batch.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    let outcome = |c: &str, q: &str| rows.iter().find(|r| &r[0] == c && &r[1] == q).map(|r| r[2].to_string());
    assert_eq!(rows.len(), 4 * 2);
    assert_eq!(outcome("lottery", "timestamp-dep").as_deref(), Some("attack"));
    assert_eq!(outcome("fixed_payout", "timestamp-dep").as_deref(), Some("no-attack"));
    assert_eq!(rows.iter().filter(|r| &r[0] == "broken" && &r[2] == "input-error").count(), 2);
    assert!(out_dir.path().join("lottery.json").exists());
}
