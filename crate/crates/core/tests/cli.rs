//! End-to-end runs of the `secwit` binary and of `run_cli` in process.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

use secwit::cli::run_cli;
use secwit::fixtures::write_all;

fn args(dir: &Path, cmd: &str, files: &[(&str, &str)], extra: &[&str]) -> Vec<String> {
    let mut v = vec!["secwit".to_string(), cmd.to_string()];
    for (flag, f) in files {
        v.push(format!("--{flag}"));
        v.push(dir.join(f).display().to_string());
    }
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn fixtures(domain: i64) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    write_all(tmp.path(), domain).unwrap();
    tmp
}

const CHECK: &[(&str, &str)] = &[
    ("property", "property.prop"),
    ("source", "source.sec"),
    ("target", "target.sec"),
    ("witness", "witness.wit"),
];

#[test]
fn binary_reports_on_stdout_and_sets_the_exit_code() {
    let tmp = fixtures(4);
    let a = args(&tmp.path().join("constant_folding"), "check", CHECK, &[]);
    let out = Command::new(env!("CARGO_BIN_EXE_secwit")).args(&a[1..]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["status"], "valid");
    assert_eq!(rec["version"], secwit::VERSION);
    assert_eq!(rec["budgets"]["buffer_bound"], 2);
    assert_eq!(rec["attack_model"]["name"], "final-memory");
}

#[test]
fn reports_are_deterministic() {
    let tmp = fixtures(2);
    let dir = tmp.path().join("dead_store_elimination");
    let a = args(&dir, "oracle", &CHECK[..3], &["--jobs", "2"]);
    let first = run_cli(&a);
    assert_eq!(first.code, 1);
    for _ in 0..3 {
        assert_eq!(run_cli(&a), first);
    }
    let b = args(&tmp.path().join("switch_instructions"), "check", CHECK, &[]);
    assert_eq!(run_cli(&b), run_cli(&b));
}

#[test]
fn usage_errors_exit_three() {
    let out = run_cli(["secwit", "check"]);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("--property"));
    let out = run_cli(["secwit", "frobnicate"]);
    assert_eq!(out.code, 3);
    let tmp = fixtures(2);
    let dir = tmp.path().join("constant_folding");
    let out = run_cli(args(&dir, "check", CHECK, &["--attack-model", "quantum"]));
    assert_eq!(out.code, 3);
    let missing = args(Path::new("/nonexistent"), "check", CHECK, &[]);
    let out = run_cli(&missing);
    assert_eq!(out.code, 3);
    assert_eq!(out.record().unwrap()["status"], "error");
    assert_eq!(run_cli(["secwit", "--version"]).code, 0);
}

#[test]
fn attack_model_override_reaches_the_report() {
    let tmp = fixtures(2);
    let dir = tmp.path().join("register_spilling");
    let out = run_cli(args(&dir, "check", CHECK, &["--attack-model", "final-memory"]));
    let rec = out.record().unwrap();
    assert_eq!(rec["attack_model"]["name"], "final-memory");
    // spilling renames every variable, so the exposed memories differ
    assert_ne!(out.code, 3);
}

#[test]
fn inconclusive_when_the_budget_runs_out() {
    let tmp = fixtures(2);
    let dir = tmp.path().join("switch_instructions");
    let out = run_cli(args(&dir, "check", CHECK, &["--budget-states", "5"]));
    assert_eq!(out.code, 2, "{}", out.stdout);
    assert_eq!(out.record().unwrap()["status"], "inconclusive");
    let out = run_cli(args(&dir, "oracle", &CHECK[..3], &["--budget-states", "5"]));
    assert_eq!(out.code, 2, "{}", out.stdout);
}

#[test]
fn transform_writes_target_and_witness_that_check() {
    let tmp = fixtures(2);
    let src = tmp.path().join("dead_branch_elimination");
    let out_dir = tmp.path().join("out");
    let mut a = args(&src, "transform", &[("source", "source.sec")], &["--kind", "dead-branch-elimination", "--site", "L2"]);
    a.extend(["--out".into(), out_dir.display().to_string(), "--property-name".into(), "ni".into()]);
    let out = run_cli(&a);
    assert_eq!(out.code, 0, "{}", out.stdout);
    std::fs::copy(src.join("property.prop"), out_dir.join("property.prop")).unwrap();
    std::fs::copy(src.join("ni.aut"), out_dir.join("ni.aut")).unwrap();
    std::fs::copy(src.join("source.sec"), out_dir.join("source.sec")).unwrap();
    assert_eq!(run_cli(args(&out_dir, "check", CHECK, &[])).code, 0);

    let refused = args(&src, "transform", &[("source", "source.sec")], &["--kind", "dead-branch-elimination", "--site", "L1", "--out", "/tmp/unused"]);
    let out = run_cli(refused);
    assert_eq!(out.code, 1);
    assert!(out.record().unwrap()["reason"].as_str().unwrap().contains("not a conditional branch"));
}

#[test]
fn product_dumps_an_accepting_lasso() {
    let tmp = fixtures(2);
    let dir = tmp.path().join("dead_store_elimination");
    let out = run_cli(args(&dir, "product", &[("property", "property.prop"), ("program", "target.sec")], &["--automaton", "key", "--dump-lasso"]));
    assert_eq!(out.code, 1);
    let rec = out.record().unwrap();
    let row = &rec["automata"][0];
    assert_eq!(row["empty"], false);
    assert_eq!(row["lasso"]["tracks"].as_array().unwrap().len(), 2);
    let dir = tmp.path().join("constant_folding");
    let out = run_cli(args(&dir, "product", &[("property", "property.prop"), ("program", "source.sec")], &[]));
    assert_eq!(out.code, 0);
    assert_eq!(out.record().unwrap()["automata"][0]["empty"], true);
}

#[test]
fn run_lists_lassos() {
    let tmp = fixtures(2);
    let dir = tmp.path().join("constant_folding");
    let out = run_cli(args(&dir, "run", &[("program", "source.sec")], &["--attack-model", "final-memory", "--domain", "3"]));
    assert_eq!(out.code, 0);
    let rec = out.record().unwrap();
    assert_eq!(rec["budgets"]["domain"], 3);
    let lassos = rec["lassos"].as_array().unwrap();
    assert_eq!(lassos.len(), 3);
    assert!(lassos[0]["trace"].as_str().unwrap().contains("fin("));
}

#[test]
fn emit_smt_writes_one_pair_per_automaton() {
    let tmp = fixtures(2);
    let dir = tmp.path().join("constant_folding");
    let out_dir = tmp.path().join("smt");
    let out = run_cli(args(&dir, "emit-smt", CHECK, &["--out", out_dir.to_str().unwrap(), "--case", "fold", "--smt-logic", "ALL"]));
    assert_eq!(out.code, 0, "{}", out.stdout);
    let base = std::fs::read_to_string(out_dir.join("fold.base.smt2")).unwrap();
    assert!(base.contains("(set-logic ALL)"));
    assert!(out_dir.join("fold.ind.smt2").exists());
}

#[test]
fn fixtures_regenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(["secwit", "fixtures", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.code, 0);
    for kind in ["constant_folding", "dead_store_elimination", "register_spilling"] {
        assert!(tmp.path().join(kind).join("source.sec").exists());
    }
    assert!(!tmp.path().join("dead_store_elimination/witness.wit").exists());
}
