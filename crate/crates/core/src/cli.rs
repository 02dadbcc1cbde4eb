//! The `secwit` command line. Every invocation prints one JSON record on
//! stdout and exits with 0 (valid or empty), 1 (invalid, with a
//! counterexample), 2 (inconclusive) or 3 (usage or input error).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::automaton::{find_accepting_lasso, Acceptor, ProductSystem};
use crate::fixtures::{self, DEFAULT_DOMAIN};
use crate::oracle::{check_preservation_oracle, find_violations, Bounds, OracleError};
use crate::optimizer::{apply_transform, Site, SwitchMode, TransformError, TransformKind};
use crate::props::{load_property, Property};
use crate::refinement::{
    acceptor_for, check_property, BisimChecker, Checker, Clause, Status, DEFAULT_BUDGET,
};
use crate::report::{Budgets, Report};
use crate::secir::ast::parse_ast;
use crate::secir::{enumerate_lassos, AttackModel, Program};
use crate::smt::{emit_base_query, emit_inductive_query, QueryCase, SkolemMap, SmtError, DEFAULT_LOGIC};
use crate::witness::{parse_witness, Witness};

pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "secwit", version, about = "Validate security-preserving program transformations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Override the value domain of every program read.
    #[arg(long)]
    domain: Option<i64>,
    /// State budget for explicit exploration.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget_states: usize,
    /// Override the attack model (io, mem, branch, ct, final-memory).
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(AttackModel::NAMES))]
    attack_model: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Validate a refinement witness.
    Check {
        #[arg(long)]
        property: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        witness: PathBuf,
        /// Check relative to the witness's bisimulation.
        #[arg(long)]
        relative: bool,
        #[arg(long, default_value_t = 2)]
        buffer_bound: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate bounded violations; with a target, check that each target
    /// violation has an input-equivalent source violation.
    Oracle {
        #[arg(long)]
        property: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        stem_max: usize,
        #[arg(long, default_value_t = 4)]
        loop_max: usize,
        #[arg(long, default_value_t = 2)]
        buffer_bound: usize,
        /// Worker threads for bundle enumeration.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Apply a transformation and write the target and its witness.
    Transform {
        #[arg(long)]
        kind: TransformKind,
        #[arg(long)]
        source: PathBuf,
        /// Site label; repeat for transformations taking several.
        #[arg(long)]
        site: Vec<String>,
        #[arg(long, default_value_t = 2)]
        registers: usize,
        /// Switching mode: plain, synchronized or block.
        #[arg(long, default_value = "plain")]
        mode: SwitchMode,
        /// Property name recorded in the witness.
        #[arg(long)]
        property_name: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the base and inductive SMT-LIB queries of a witness.
    EmitSmt {
        #[arg(long)]
        property: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        witness: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// File stem; defaults to the property name.
        #[arg(long)]
        case: Option<String>,
        #[arg(long, default_value = DEFAULT_LOGIC)]
        smt_logic: String,
        #[arg(long, default_value_t = 2)]
        buffer_bound: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Emptiness of the product of each violation automaton with a program.
    Product {
        #[arg(long)]
        property: PathBuf,
        #[arg(long)]
        program: PathBuf,
        /// Only this automaton.
        #[arg(long)]
        automaton: Option<String>,
        /// Include the accepting lasso.
        #[arg(long)]
        dump_lasso: bool,
        #[arg(long, default_value_t = 2)]
        buffer_bound: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Print the bounded lassos of a program and their traces.
    Run {
        #[arg(long)]
        program: PathBuf,
        #[arg(long, default_value_t = 10)]
        stem_max: usize,
        #[arg(long, default_value_t = 4)]
        loop_max: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate the fixture directories.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Exit code and the lines printed on stdout and stderr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    /// The JSON record, when one was printed.
    pub fn record(&self) -> Option<Value> {
        serde_json::from_str(self.stdout.lines().next()?).ok()
    }
}

struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn usage(msg: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            msg: msg.to_string(),
        }
    }

    fn inconclusive(msg: impl ToString) -> Self {
        Failure {
            code: Status::Inconclusive.exit_code(),
            msg: msg.to_string(),
        }
    }
}

pub fn run_cli<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let (stdout, stderr) = if e.use_stderr() { (String::new(), text) } else { (text, String::new()) };
            return Outcome { code, stdout, stderr };
        }
    };
    let (name, budgets, model) = header(&cli.cmd);
    let mut rep = Report::new(name, model.as_ref(), &budgets);
    match dispatch(cli.cmd, &mut rep) {
        Ok(st) => {
            rep.set("status", st);
            Outcome {
                code: st.exit_code(),
                stdout: rep.to_line() + "\n",
                stderr: String::new(),
            }
        }
        Err(f) => {
            let status = if f.code == EXIT_USAGE { "error" } else { "inconclusive" };
            rep.set("status", status).set("error", &f.msg);
            Outcome {
                code: f.code,
                stdout: rep.to_line() + "\n",
                stderr: format!("secwit {name}: {}\n", f.msg),
            }
        }
    }
}

fn model_override(c: &Common) -> Option<AttackModel> {
    c.attack_model.as_deref().and_then(AttackModel::by_name)
}

/// Command name, budgets and the attack model known before any file is read.
fn header(cmd: &Cmd) -> (&'static str, Budgets, Option<AttackModel>) {
    let b = |c: &Common| Budgets {
        budget_states: c.budget_states,
        domain: c.domain,
        ..Budgets::default()
    };
    match cmd {
        Cmd::Check { buffer_bound, common, .. } => (
            "check",
            Budgets { buffer_bound: Some(*buffer_bound), ..b(common) },
            model_override(common),
        ),
        Cmd::Oracle { stem_max, loop_max, buffer_bound, jobs, common, .. } => (
            "oracle",
            Budgets {
                stem_max: Some(*stem_max),
                loop_max: Some(*loop_max),
                buffer_bound: Some(*buffer_bound),
                jobs: Some(jobs.unwrap_or_else(rayon::current_num_threads)),
                ..b(common)
            },
            model_override(common),
        ),
        Cmd::Transform { common, .. } => ("transform", b(common), model_override(common)),
        Cmd::EmitSmt { buffer_bound, common, .. } => (
            "emit-smt",
            Budgets { buffer_bound: Some(*buffer_bound), ..b(common) },
            model_override(common),
        ),
        Cmd::Product { buffer_bound, common, .. } => (
            "product",
            Budgets { buffer_bound: Some(*buffer_bound), ..b(common) },
            model_override(common),
        ),
        Cmd::Run { stem_max, loop_max, common, .. } => (
            "run",
            Budgets {
                stem_max: Some(*stem_max),
                loop_max: Some(*loop_max),
                ..b(common)
            },
            Some(model_override(common).unwrap_or_else(AttackModel::io)),
        ),
        Cmd::Fixtures { common, .. } => (
            "fixtures",
            Budgets {
                domain: Some(common.domain.unwrap_or(DEFAULT_DOMAIN)),
                ..b(common)
            },
            None,
        ),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn load_program(path: &Path, domain: Option<i64>) -> Result<Program, Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure::usage(format!("{}: {e}", path.display()));
    let mut ast = parse_ast(&read(path)?).map_err(|e| fail(&e))?;
    if let Some(d) = domain {
        ast.domain = d;
    }
    Program::from_ast(ast).map_err(|e| fail(&e))
}

fn load_prop(path: &Path, c: &Common, rep: &mut Report) -> Result<Property, Failure> {
    let mut p = load_property(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if let Some(mut m) = model_override(c) {
        if m.final_memory {
            m.final_vars = p.model.final_vars.take();
        }
        p.model = m;
    }
    rep.set("attack_model", &p.model).set("property", &p.name);
    Ok(p)
}

fn load_witness(path: &Path) -> Result<Witness, Failure> {
    parse_witness(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Cmd, rep: &mut Report) -> Result<Status, Failure> {
    match cmd {
        Cmd::Check { property, source, target, witness, relative, buffer_bound, common } => {
            let prop = load_prop(&property, &common, rep)?;
            let s = load_program(&source, common.domain)?;
            let t = load_program(&target, common.domain)?;
            let w = load_witness(&witness)?;
            check(rep, &prop, &s, &t, &w, relative, buffer_bound, common.budget_states)
        }
        Cmd::Oracle { property, source, target, stem_max, loop_max, buffer_bound, jobs, common } => {
            let prop = load_prop(&property, &common, rep)?;
            let s = load_program(&source, common.domain)?;
            let t = target.as_deref().map(|p| load_program(p, common.domain)).transpose()?;
            let bounds = Bounds {
                stem_max,
                loop_max,
                budget: common.budget_states,
                ..Bounds::default()
            };
            let job = |rep: &mut Report| oracle(rep, &prop, &s, t.as_ref(), &bounds, buffer_bound);
            match jobs {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(Failure::usage)?
                    .install(|| job(rep)),
                None => job(rep),
            }
        }
        Cmd::Transform { kind, source, site, registers, mode, property_name, out, common } => {
            let s = load_program(&source, common.domain)?;
            let site = Site { labels: site, registers, mode };
            transform(rep, kind, &s, &site, property_name, &out)
        }
        Cmd::EmitSmt { property, source, target, witness, out, case, smt_logic, buffer_bound, common } => {
            let prop = load_prop(&property, &common, rep)?;
            let s = load_program(&source, common.domain)?;
            let t = load_program(&target, common.domain)?;
            let w = load_witness(&witness)?;
            let case = case.unwrap_or_else(|| prop.name.clone());
            emit_smt(rep, &prop, &s, &t, &w, &out, &case, &smt_logic, buffer_bound)
        }
        Cmd::Product { property, program, automaton, dump_lasso, buffer_bound, common } => {
            let prop = load_prop(&property, &common, rep)?;
            let p = load_program(&program, common.domain)?;
            product(rep, &prop, &p, automaton.as_deref(), dump_lasso, buffer_bound, common.budget_states)
        }
        Cmd::Run { program, stem_max, loop_max, common } => {
            let p = load_program(&program, common.domain)?;
            let m = model_override(&common).unwrap_or_else(AttackModel::io);
            run(rep, &p, &m, stem_max, loop_max, common.budget_states)
        }
        Cmd::Fixtures { out, common } => {
            let d = common.domain.unwrap_or(DEFAULT_DOMAIN);
            let dirs = fixtures::write_all(&out, d).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
            let dirs: Vec<String> = dirs.iter().map(|p| p.display().to_string()).collect();
            rep.set("fixtures", dirs);
            Ok(Status::Valid)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn check(
    rep: &mut Report,
    prop: &Property,
    s: &Program,
    t: &Program,
    w: &Witness,
    relative: bool,
    bound: usize,
    budget: usize,
) -> Result<Status, Failure> {
    let (status, verdicts) =
        check_property(prop, s, t, w, bound, relative, budget).map_err(Failure::usage)?;
    let mut rows = Vec::new();
    for (a, v) in prop.automata.iter().zip(&verdicts) {
        let mut row = serde_json::to_value(v).expect("verdict serializes");
        if let Some(c) = &v.verdict.counterexample {
            let acc = acceptor_for(a, s, t, &prop.model, bound);
            let again = match c.clause {
                Clause::Bisim1 | Clause::Bisim2 | Clause::Bisim3 => {
                    let b = w.bisim.as_ref().expect("bisim clause implies a bisimulation");
                    let st = w.stutter.as_ref().map(|st| (&st.rank, st.bound));
                    BisimChecker::new(s, t, &prop.model, b, &w.inputs, st).is_ok_and(|bc| bc.recheck(c))
                }
                _ => {
                    let ck = Checker::new(&acc, s, t, &prop.model, w);
                    let ck = if relative { ck.and_then(|ck| ck.relative(w)) } else { ck };
                    ck.is_ok_and(|ck| ck.recheck(c))
                }
            };
            row["rechecked"] = again.into();
        }
        rows.push(row);
    }
    rep.set("relative", relative).set("automata", rows);
    Ok(status)
}

fn oracle(
    rep: &mut Report,
    prop: &Property,
    s: &Program,
    t: Option<&Program>,
    bounds: &Bounds,
    bound: usize,
) -> Result<Status, Failure> {
    let fail = |e: OracleError| match e {
        OracleError::Unsupported => Failure::usage(e),
        _ => Failure::inconclusive(e),
    };
    let show = |v: &crate::oracle::Violation, p: &Program| {
        let mut x = serde_json::to_value(v).expect("violation serializes");
        x["automaton"] = prop.automata[v.automaton].name.clone().into();
        x["rechecked"] = v.recheck(p, prop, bound, bounds.budget).into();
        x
    };
    match t {
        Some(t) => {
            let v = check_preservation_oracle(s, t, prop, bounds).map_err(fail)?;
            rep.set("target_violations", v.target_violations)
                .set("source_violations", v.source_violations)
                .set("unmatched", v.unmatched.as_ref().map(|u| show(u, t)))
                .set("truncated", v.truncated)
                .set("note", &v.note);
            Ok(v.status)
        }
        None => {
            let vs = find_violations(s, prop, bounds).map_err(fail)?;
            let counts: Vec<Value> = prop
                .automata
                .iter()
                .enumerate()
                .map(|(i, a)| json!({"automaton": a.name, "violations": vs.violations.iter().filter(|v| v.automaton == i).count()}))
                .collect();
            rep.set("lassos", vs.lassos)
                .set("bundles", vs.bundles)
                .set("automata", counts)
                .set("first", vs.violations.first().map(|v| show(v, s)))
                .set("truncated", vs.truncated);
            Ok(if vs.violations.is_empty() { Status::Valid } else { Status::Invalid })
        }
    }
}

fn transform(
    rep: &mut Report,
    kind: TransformKind,
    s: &Program,
    site: &Site,
    property: Option<String>,
    out: &Path,
) -> Result<Status, Failure> {
    rep.set("kind", kind.name());
    let mut r = match apply_transform(kind, s, site) {
        Ok(r) => r,
        Err(e @ (TransformError::Inapplicable { .. } | TransformError::Template { .. })) => {
            rep.set("reason", e.to_string());
            return Ok(Status::Invalid);
        }
        Err(e) => return Err(Failure::usage(e)),
    };
    let io = |e: std::io::Error| Failure::usage(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let mut files = Vec::new();
    let mut write = |name: &str, text: String| -> Result<(), Failure> {
        let p = out.join(name);
        fs::write(&p, text).map_err(io)?;
        files.push(p.display().to_string());
        Ok(())
    };
    if r.source.to_string() != s.to_string() {
        write("source.sec", r.source.to_string())?;
    }
    write("target.sec", r.target.to_string())?;
    if let Some(w) = r.witness.as_mut() {
        if let Some(name) = property {
            w.property = name;
        }
        write("witness.wit", w.to_string())?;
    }
    rep.set("files", files)
        .set("universal_only", r.universal_only)
        .set("notes", &r.notes);
    Ok(Status::Valid)
}

#[allow(clippy::too_many_arguments)]
fn emit_smt(
    rep: &mut Report,
    prop: &Property,
    s: &Program,
    t: &Program,
    w: &Witness,
    out: &Path,
    case: &str,
    logic: &str,
    bound: usize,
) -> Result<Status, Failure> {
    let fail = |e: SmtError| match e {
        SmtError::Unsupported { .. } => Failure::inconclusive(e),
        _ => Failure::usage(e),
    };
    let sk = SkolemMap::from_witness(w).map_err(fail)?;
    fs::create_dir_all(out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    let mut files = Vec::new();
    for a in &prop.automata {
        let q = QueryCase {
            automaton: a,
            source: s,
            target: t,
            model: &prop.model,
            buffer_bound: bound,
            logic,
        };
        let stem = if prop.automata.len() == 1 { case.to_string() } else { format!("{case}_{}", a.name) };
        for (suffix, text) in [("base", emit_base_query(&q, w)), ("ind", emit_inductive_query(&q, w, &sk))] {
            let p = out.join(format!("{stem}.{suffix}.smt2"));
            fs::write(&p, text.map_err(fail)?).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            files.push(p.display().to_string());
        }
    }
    rep.set("logic", logic).set("files", files);
    Ok(Status::Valid)
}

fn product(
    rep: &mut Report,
    prop: &Property,
    p: &Program,
    only: Option<&str>,
    dump: bool,
    bound: usize,
    budget: usize,
) -> Result<Status, Failure> {
    let chosen: Vec<_> = prop.automata.iter().filter(|a| only.is_none_or(|n| a.name == n)).collect();
    if chosen.is_empty() {
        return Err(Failure::usage(format!("no automaton named `{}`", only.unwrap_or_default())));
    }
    let mut rows = Vec::new();
    let mut status = Status::Valid;
    for a in chosen {
        let acc = if p.has_silent_steps(&prop.model) {
            Acceptor::buffered(a.clone(), bound)
        } else {
            Acceptor::plain(a.clone())
        };
        let ps = ProductSystem::new(&acc, p, &prop.model).map_err(Failure::usage)?;
        let row = match find_accepting_lasso(&ps, budget) {
            Ok((None, n)) => json!({"automaton": a.name, "empty": true, "states": n}),
            Ok((Some(l), n)) => {
                status = Status::Invalid;
                let mut row = json!({"automaton": a.name, "empty": false, "states": n});
                if dump {
                    let tracks: Vec<String> = (0..ps.k()).map(|i| l.track(i).trace().to_string()).collect();
                    let states: Vec<String> = l.stem.iter().chain(&l.cycle).map(|(s, _)| ps.show(s)).collect();
                    row["lasso"] = json!({
                        "stem_len": l.stem.len(),
                        "states": states,
                        "tracks": tracks,
                    });
                }
                row
            }
            Err(e) => {
                if status == Status::Valid {
                    status = Status::Inconclusive;
                }
                json!({"automaton": a.name, "empty": Value::Null, "reason": e.to_string()})
            }
        };
        rows.push(row);
    }
    rep.set("automata", rows);
    Ok(status)
}

fn run(rep: &mut Report, p: &Program, m: &AttackModel, stem: usize, lp: usize, budget: usize) -> Result<Status, Failure> {
    let set = enumerate_lassos(p, m, stem, lp, budget).map_err(Failure::inconclusive)?;
    let lassos: Vec<Value> = set
        .lassos
        .iter()
        .map(|l| {
            json!({
                "trace": l.trace().to_string(),
                "loop_head": l.loop_.first().map(|s| p.show_config(&s.from)),
            })
        })
        .collect();
    rep.set("program", &p.name)
        .set("lassos", lassos)
        .set("truncated", set.truncated)
        .set("explored", set.explored);
    Ok(Status::Valid)
}
