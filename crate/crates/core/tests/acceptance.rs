//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured numbers; run with `--nocapture` to see them.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::Value;

use secwit::automaton::{accepts, Acceptor, ExploreError, ProductSystem};
use secwit::fixtures::{fixture, write_fixture, DEFAULT_DOMAIN};
use secwit::optimizer::{apply_transform, Site, TransformKind};
use secwit::oracle::{check_preservation_oracle, find_violations, Bounds};
use secwit::props::{final_memory_equal, negated_noninterference, Property};
use secwit::refinement::{
    acceptor_for, check_bisimulation, check_input_deterministic, check_property, check_relative_refinement,
    Checker, Clause, Status, DEFAULT_BUDGET,
};
use secwit::secir::ast::{Expr, Instr};
use secwit::secir::{enumerate_lassos, AttackModel, Channel, Program};
use secwit::smt::{emit_base_query, emit_inductive_query, QueryCase, SkolemMap, DEFAULT_LOGIC};
use secwit::traceops::{compress, zip, UPWord};
use secwit::witness::{parse_witness, Witness};

const BIN: &str = env!("CARGO_BIN_EXE_secwit");

fn verdict(n: u32, ok: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(ok, "criterion {n} failed: {}", detail.as_ref());
}

fn cli(args: &[&str]) -> (i32, Value) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    let line = String::from_utf8_lossy(&out.stdout);
    let rec = serde_json::from_str(line.lines().next().unwrap_or("null")).unwrap_or(Value::Null);
    (out.status.code().unwrap_or(-1), rec)
}

fn p(path: &Path, f: &str) -> String {
    path.join(f).display().to_string()
}

fn check_args<'a>(dir: &'a Path, witness: &'a str) -> Vec<String> {
    vec![
        "check".into(),
        "--property".into(),
        p(dir, "property.prop"),
        "--source".into(),
        p(dir, "source.sec"),
        "--target".into(),
        p(dir, "target.sec"),
        "--witness".into(),
        witness.into(),
    ]
}

fn run(args: &[String]) -> (i32, Value) {
    cli(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

const WEAK: &str = "witness for fme {\n  R: qT = qS && t = s;\n  I: inputs;\n  skolem sigmaS := sigmaT;\n  skolem pS := pT;\n}\n";

#[test]
fn criterion_01_constant_folding_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixture(tmp.path(), TransformKind::ConstantFolding, 4).unwrap();
    let start = Instant::now();
    let (code, rec) = run(&check_args(&dir, &p(&dir, "witness.wit")));
    let mut oracle = vec!["oracle".to_string()];
    for (flag, f) in [("--property", "property.prop"), ("--source", "source.sec"), ("--target", "target.sec")] {
        oracle.push(flag.into());
        oracle.push(p(&dir, f));
    }
    oracle.extend(["--stem-max", "10", "--loop-max", "4"].map(String::from));
    let (ocode, orec) = run(&oracle);
    let elapsed = start.elapsed();
    let ok = code == 0
        && rec["status"] == "valid"
        && ocode == 0
        && orec["target_violations"] == 0
        && orec["source_violations"] == 0
        && elapsed < Duration::from_secs(10);
    verdict(
        1,
        ok,
        format!(
            "check exit {code}, oracle exit {ocode}, violations S={} T={}, {:.2}s (limit 10s)",
            orec["source_violations"],
            orec["target_violations"],
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_weakened_witness_is_refuted() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixture(tmp.path(), TransformKind::ConstantFolding, 4).unwrap();
    let weak = tmp.path().join("weak.wit");
    std::fs::write(&weak, WEAK).unwrap();
    let (code, rec) = run(&check_args(&dir, &weak.display().to_string()));
    let row = &rec["automata"][0];
    let cli_ok = code == 1 && row["counterexample"]["clause"] == "2c" && row["rechecked"] == true;

    // standalone: a fresh checker re-evaluates the reported pair
    let fx = fixture(TransformKind::ConstantFolding, 4);
    let r = fx.transform().unwrap();
    let w = parse_witness(WEAK).unwrap();
    let a = &fx.property.automata[0];
    let acc = acceptor_for(a, &r.source, &r.target, &fx.property.model, 2);
    let v = Checker::new(&acc, &r.source, &r.target, &fx.property.model, &w).unwrap().check(DEFAULT_BUDGET);
    let cex = v.counterexample.clone().expect("counterexample");
    let fresh = Checker::new(&acc, &r.source, &r.target, &fx.property.model, &w).unwrap();
    let lib_ok = v.clause() == Some(Clause::C) && fresh.recheck(&cex);
    verdict(
        2,
        cli_ok && lib_ok,
        format!("exit {code}, clause {}, standalone recheck {}", row["counterexample"]["clause"], fresh.recheck(&cex)),
    );
}

#[test]
fn criterion_03_dead_store_elimination_leaks_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_fixture(tmp.path(), TransformKind::DeadStoreElimination, DEFAULT_DOMAIN).unwrap();
    let mut args = vec!["oracle".to_string()];
    for (flag, f) in [("--property", "property.prop"), ("--source", "source.sec"), ("--target", "target.sec")] {
        args.push(flag.into());
        args.push(p(&dir, f));
    }
    let (code, rec) = run(&args);
    let un = &rec["unmatched"];
    let ok = code == 1
        && rec["attack_model"]["name"] == "final-memory"
        && un["automaton"] == "key"
        && un["rechecked"] == true;
    verdict(
        3,
        ok,
        format!(
            "exit {code}, unmatched automaton {}, T violations {}, S violations {}",
            un["automaton"], rec["target_violations"], rec["source_violations"]
        ),
    );
}

#[test]
fn criterion_04_witness_bearing_fixtures_validate() {
    let mut lines = Vec::new();
    let mut ok = true;
    for k in TransformKind::ALL.into_iter().filter(|k| k.has_witness()) {
        let fx = fixture(k, DEFAULT_DOMAIN);
        let r = fx.transform().unwrap();
        let w = r.witness.as_ref().unwrap();
        let start = Instant::now();
        let (st, _) = check_property(&fx.property, &r.source, &r.target, w, 2, false, DEFAULT_BUDGET).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let mut good = st == Status::Valid && secs < 30.0;
        let mut extra = String::new();
        match k {
            TransformKind::CommonBranchFactorization => {
                let acc = acceptor_for(&fx.property.automata[0], &r.source, &r.target, &fx.property.model, 2);
                good &= acc.bound() == Some(2);
                extra = " buffered".into();
            }
            TransformKind::DeadBranchElimination | TransformKind::LoopPeeling => {
                let mut bare = w.clone();
                bare.stutter = None;
                let (st2, _) =
                    check_property(&fx.property, &r.source, &r.target, &bare, 2, false, DEFAULT_BUDGET).unwrap();
                good &= w.stutter.is_some() && st2 != Status::Valid;
                extra = format!(" without stuttering {st2}");
            }
            TransformKind::RegisterSpilling => {
                good &= w.r.to_string().contains("sigma{");
                extra = " sigma table".into();
            }
            _ => {}
        }
        ok &= good;
        lines.push(format!("{k} {st} {secs:.2}s{extra}"));
    }
    verdict(4, ok, format!("(limit 30s each) {}", lines.join("; ")));
}

/// Product states reachable from the initial state, or `None` past `cap`.
fn product_size(ps: &ProductSystem, cap: usize) -> Option<usize> {
    let mut seen = std::collections::HashSet::from([ps.initial()]);
    let mut stack = vec![ps.initial()];
    while let Some(s) = stack.pop() {
        for (_, t) in ps.successors(&s).ok()? {
            if seen.insert(t.clone()) {
                if seen.len() > cap {
                    return None;
                }
                stack.push(t);
            }
        }
    }
    Some(seen.len())
}

#[test]
fn criterion_05_product_membership() {
    let m = AttackModel::io();
    let mut r = common::rng(5);
    let (mut instances, mut bundles, mut accepted, mut foreign, mut bad) = (0, 0, 0, 0, Vec::new());
    let mut tries = 0;
    while instances < 120 && tries < 5000 {
        tries += 1;
        let prog = common::program(&mut r, 2, true);
        let other = common::program(&mut r, 2, true);
        let k = r.gen_range(1..=2);
        let a = common::automaton(&mut r, k);
        let acc = if prog.has_silent_steps(&m) { Acceptor::buffered(a.clone(), 2) } else { Acceptor::plain(a.clone()) };
        let Ok(ps) = ProductSystem::new(&acc, &prog, &m) else { continue };
        if product_size(&ps, 200).is_none() {
            continue;
        }
        let mut traces: Vec<UPWord<_>> = Vec::new();
        for q in [&prog, &other] {
            if let Ok(set) = enumerate_lassos(q, &m, 6, 3, 100_000) {
                traces.extend(set.lassos.iter().take(6).map(|l| l.trace()));
            }
        }
        traces.dedup();
        let mut compared = 0;
        for t in common::all_tuples(traces.len(), k) {
            let ws: Vec<_> = t.iter().map(|&i| traces[i].clone()).collect();
            let w = zip(&ws);
            let lhs = match ps.accepts_word(&w, 100_000) {
                Ok(b) => b,
                Err(_) => continue,
            };
            let Ok(aut) = accepts(&acc, &w, 100_000) else { continue };
            let rhs = aut && ws.iter().all(|x| common::is_trace(&prog, &m, x));
            compared += 1;
            accepted += usize::from(lhs);
            foreign += usize::from(aut && !rhs);
            if lhs != rhs {
                bad.push(format!("{}\n{}\n{w:?}", prog, a));
            }
        }
        if compared > 0 {
            instances += 1;
            bundles += compared;
        }
    }
    verdict(
        5,
        instances >= 100 && bad.is_empty(),
        format!(
            "{instances} instances (need 100), {bundles} bundles, {accepted} in the product, \
             {foreign} accepted by the automaton with a foreign track, {} discrepancies",
            bad.len()
        ),
    );
    if let Some(b) = bad.first() {
        panic!("{b}");
    }
}

#[test]
fn criterion_06_buffering() {
    let mut r = common::rng(6);
    // (within bound and decided, beyond bound and decided, overflow)
    let (mut within, mut beyond, mut overflows, mut bad) = (0, 0, 0, Vec::new());
    for _ in 0..400 {
        let k = r.gen_range(1..=2);
        let a = common::automaton(&mut r, k);
        let bound = r.gen_range(1..=3);
        let ws: Vec<UPWord<_>> = (0..k).map(|_| common::word(&mut r)).collect();
        let cs: Vec<UPWord<_>> = ws.iter().map(|w| compress(w).expect("loops are not silent")).collect();
        let base = common::buchi_accepts(&a, &zip(&cs));
        let horizon = ws.iter().map(|w| w.stem.len()).max().unwrap() + (bound + 3) * 6;
        let lag = common::max_lag(&ws, horizon);
        match accepts(&Acceptor::buffered(a.clone(), bound), &zip(&ws), 1_000_000) {
            // a run may die out before the buffers outgrow the bound
            Ok(got) => {
                if lag <= bound { within += 1 } else { beyond += 1 }
                if got != base {
                    bad.push(format!("{a}\n{ws:?} bound {bound} lag {lag}: buffered {got}, base {base}"));
                }
            }
            Err(ExploreError::Overflow(_)) => {
                overflows += 1;
                if lag <= bound {
                    bad.push(format!("{a}\n{ws:?}: overflow with lag {lag} <= {bound}"));
                }
            }
            Err(e) => bad.push(format!("{e}")),
        }
    }
    verdict(
        6,
        within >= 100 && bad.is_empty(),
        format!(
            "{within} decided within bound (need 100), {beyond} decided before overflow, \
             {overflows} overflows reported inconclusive, {} discrepancies",
            bad.len()
        ),
    );
    if let Some(b) = bad.first() {
        panic!("{b}");
    }
}

fn mutate_literal(e: &mut Expr, r: &mut impl Rng) -> bool {
    match e {
        Expr::Lit(n) => {
            *n += 1;
            true
        }
        Expr::Var(_) if r.gen_bool(0.5) => {
            *e = Expr::bin(secwit::secir::BinOp::Add, e.clone(), Expr::Lit(1));
            true
        }
        Expr::Bin(_, a, b) => mutate_literal(a, r) || mutate_literal(b, r),
        Expr::Not(a) | Expr::Neg(a) => mutate_literal(a, r),
        _ => false,
    }
}

/// Changes one output or assignment of `p`; `None` when nothing applies.
fn mutate(p: &Program, r: &mut impl Rng) -> Option<Program> {
    let mut ast = p.ast().clone();
    let n = ast.body.len();
    let start = r.gen_range(0..n);
    for j in 0..n {
        let (_, ins) = &mut ast.body[(start + j) % n];
        let changed = match ins {
            Instr::Output(c, e) => {
                if r.gen_bool(0.5) {
                    *c = if *c == Channel::Public { Channel::Secret } else { Channel::Public };
                    true
                } else {
                    mutate_literal(e, r)
                }
            }
            Instr::Assign(_, e) => mutate_literal(e, r),
            _ => false,
        };
        if changed {
            return Program::from_ast(ast).ok();
        }
    }
    None
}

#[test]
fn criterion_07_soundness_against_the_oracle() {
    let bounds = Bounds::default();
    let mut checked = Vec::new();
    for k in TransformKind::ALL.into_iter().filter(|k| k.has_witness()) {
        let fx = fixture(k, DEFAULT_DOMAIN);
        let r = fx.transform().unwrap();
        checked.push((k.name().to_string(), fx.property, r.source, r.target, r.witness.unwrap()));
    }
    let nfix = checked.len();
    let mut r = common::rng(7);
    let kinds = [TransformKind::ConstantFolding, TransformKind::RegisterSpilling];
    let mut pairs = 0;
    while pairs < 50 {
        let src = common::program(&mut r, 2, false);
        let kind = kinds[r.gen_range(0..kinds.len())];
        let Ok(t) = apply_transform(kind, &src, &Site::default()) else { continue };
        let Some(mut w) = t.witness else { continue };
        let target = if r.gen_bool(0.5) {
            match mutate(&t.target, &mut r) {
                Some(m) => m,
                None => continue,
            }
        } else {
            t.target
        };
        let prop = if kind == TransformKind::ConstantFolding && r.gen_bool(0.5) {
            let vars: Vec<&str> = src.scalar_names().collect();
            w.property = "fme".into();
            Property::universal("fme", vec![final_memory_equal(&vars)], AttackModel::final_memory())
        } else {
            Property::universal("ni", vec![negated_noninterference()], AttackModel::io())
        };
        pairs += 1;
        checked.push((format!("random {kind}"), prop, t.source, target, w));
    }
    let (mut valid, mut contradictions) = (0, Vec::new());
    for (name, prop, s, t, w) in &checked {
        let Ok((st, _)) = check_property(prop, s, t, w, 2, false, DEFAULT_BUDGET) else { continue };
        if st != Status::Valid {
            continue;
        }
        valid += 1;
        let ov = check_preservation_oracle(s, t, prop, &bounds).unwrap();
        if ov.status != Status::Valid {
            contradictions.push(format!("{name}:\n{s}\n{t}\n{w}\n{:?}", ov.unmatched));
        }
    }
    verdict(
        7,
        valid >= nfix && contradictions.is_empty(),
        format!(
            "{} instances ({nfix} fixtures + {pairs} random pairs), {valid} valid, {} contradictions",
            checked.len(),
            contradictions.len()
        ),
    );
    if let Some(c) = contradictions.first() {
        panic!("{c}");
    }
}

fn drop_pair(w: &Witness, pair: &str) -> Witness {
    let text = w.to_string();
    let out: Vec<String> = text
        .lines()
        .map(|l| if l.trim_start().starts_with("bisim:") { l.replace(&format!("{pair}, "), "") } else { l.to_string() })
        .collect();
    parse_witness(&out.join("\n")).unwrap()
}

#[test]
fn criterion_08_relative_refinement() {
    let fx = fixture(TransformKind::ConstantFolding, 4);
    let r = fx.transform().unwrap();
    let w = r.witness.clone().unwrap();
    let m = &fx.property.model;
    let acc = acceptor_for(&fx.property.automata[0], &r.source, &r.target, m, 2);
    let v = check_relative_refinement(&acc, &r.source, &r.target, m, &w, DEFAULT_BUDGET).unwrap();
    let bad = drop_pair(&w, "(L3,L3)");
    let b = bad.bisim.as_ref().unwrap();
    let bv = check_bisimulation(&r.source, &r.target, m, b, &bad.inputs, None, DEFAULT_BUDGET).unwrap();
    let ok = v.status == Status::Valid
        && w.bisim != bad.bisim
        && bv.status == Status::Invalid
        && bv.clause() == Some(Clause::Bisim2);
    verdict(
        8,
        ok,
        format!("R + B {}, B without (L3,L3) {} at clause {:?}", v.status, bv.status, bv.clause().map(|c| c.name())),
    );
}

#[test]
fn criterion_09_input_determinism() {
    let mut lines = Vec::new();
    let mut ok = true;
    for k in TransformKind::ALL {
        let fx = fixture(k, DEFAULT_DOMAIN);
        let r = fx.transform().unwrap();
        let m = &fx.property.model;
        for (side, prog) in [("source", &r.source), ("target", &r.target)] {
            let det = check_input_deterministic(prog, m, DEFAULT_BUDGET).unwrap();
            let want = !(k == TransformKind::ExpressionFlattening && side == "source");
            ok &= det == want;
            if !det || det != want {
                lines.push(format!("{k} {side} deterministic={det}"));
            }
        }
    }
    verdict(9, ok, format!("16 programs checked; nondeterministic: {}", lines.join(", ")));
}

fn z3(query: &str) -> Option<String> {
    let dir = tempfile::tempdir().ok()?;
    let f = dir.path().join("q.smt2");
    std::fs::write(&f, query).ok()?;
    let out = Command::new("z3").arg("-T:60").arg(&f).output().ok()?;
    Some(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

#[test]
fn criterion_10_smt_agreement() {
    let fx = fixture(TransformKind::ConstantFolding, 4);
    let r = fx.transform().unwrap();
    let w = r.witness.clone().unwrap();
    let weak = parse_witness(WEAK).unwrap();
    let q = QueryCase {
        automaton: &fx.property.automata[0],
        source: &r.source,
        target: &r.target,
        model: &fx.property.model,
        buffer_bound: 2,
        logic: DEFAULT_LOGIC,
    };
    let sk = SkolemMap::from_witness(&w).unwrap();
    let base = emit_base_query(&q, &w).unwrap();
    let ind = emit_inductive_query(&q, &w, &sk).unwrap();
    let weak_ind = emit_inductive_query(&q, &weak, &SkolemMap::from_witness(&weak).unwrap()).unwrap();
    let Some(b) = z3(&base) else {
        verdict(10, true, "skipped: no z3 on PATH (solver-optional)");
        return;
    };
    let i = z3(&ind).unwrap_or_default();
    let wi = z3(&weak_ind).unwrap_or_default();
    verdict(
        10,
        b == "unsat" && i == "unsat" && wi == "sat",
        format!("base {b}, inductive {i}, weakened inductive {wi}"),
    );
}

#[test]
fn oracle_counts_every_bundle() {
    // every pair of bounded lassos is a candidate bundle
    let fx = fixture(TransformKind::ExpressionFlattening, DEFAULT_DOMAIN);
    let v = find_violations(&fx.source, &fx.property, &Bounds::default()).unwrap();
    let set = enumerate_lassos(&fx.source, &fx.property.model, 10, 4, 1_000_000).unwrap();
    assert_eq!(v.lassos, set.lassos.len());
    assert_eq!(v.bundles, set.lassos.len().pow(2));
}
