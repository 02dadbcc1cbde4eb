//! SMT-LIB 2 encodings of a refinement witness: the base case on the
//! initial states, and the one-step inductive case with every existential
//! (source letter, source automaton state, source successor) replaced by a
//! Skolem term. Both queries assert the negated claim, so `unsat` means the
//! case holds.
//!
//! Locations and automaton states are datatypes, memories are one `Int`
//! constant per cell and track constrained to `0 <= v < D`, events are a
//! datatype, and the (buffered) transition relation and acceptance set are
//! `define-fun`s. Arithmetic is unbounded; i64 wrap-around is not modeled.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::automaton::{Acceptor, BundleAutomaton, CmpOp, ExtKind, Guard, Term};
use crate::refinement::acceptor_for;
use crate::secir::ast::BinOp;
use crate::secir::{AttackModel, Channel, Event, Ext, Program, RExpr, RInstr};
use crate::traceops::EventClass;
use crate::witness::compile::{AlphaTerm, BExpr, Ctx, IExpr, Target, Track};
use crate::witness::{Side, Witness, WitnessError};

pub const DEFAULT_LOGIC: &str = "UFDTLIA";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmtError {
    #[error(transparent)]
    Witness(#[from] WitnessError),
    #[error("missing Skolem term for `{0}`")]
    MissingSkolem(String),
    #[error("Skolem `{name} := {term}` refers to an existential")]
    SkolemExistential { name: String, term: String },
    #[error("unsupported Skolem `{name} := {term}`")]
    SkolemUnsupported { name: String, term: String },
    #[error("{side} location `{label}`: {what} has no SMT encoding")]
    Unsupported { side: Side, label: String, what: String },
}

const EXISTENTIALS: &[&str] = &["sigmaS", "pS", "sPrime"];

/// How the existentials of the inductive step are eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkolemMap {
    /// `sigmaS := sigmaT`: the source reads the target's letter.
    pub sigma_s_is_target: bool,
    /// `pS := pT`: the source automaton lands where the target's did.
    pub p_s_is_target: bool,
}

impl SkolemMap {
    pub const IDENTITY: SkolemMap = SkolemMap {
        sigma_s_is_target: true,
        p_s_is_target: true,
    };

    /// Reads the `skolem` lines of a witness. `sPrime` defaults to the
    /// source successor on the Skolem letter and may only be given as `step`.
    pub fn from_witness(w: &Witness) -> Result<SkolemMap, SmtError> {
        for (name, term) in &w.skolems {
            if EXISTENTIALS.contains(&term.as_str()) {
                return Err(SmtError::SkolemExistential {
                    name: name.clone(),
                    term: term.clone(),
                });
            }
            let ok = match name.as_str() {
                "sigmaS" => term == "sigmaT",
                "pS" => term == "pT",
                "sPrime" => term == "step",
                _ => false,
            };
            if !ok {
                return Err(SmtError::SkolemUnsupported {
                    name: name.clone(),
                    term: term.clone(),
                });
            }
        }
        for need in ["sigmaS", "pS"] {
            if w.skolem(need).is_none() {
                return Err(SmtError::MissingSkolem(need.to_string()));
            }
        }
        Ok(SkolemMap::IDENTITY)
    }
}

/// One automaton of a property, the program pair and the encoding knobs.
#[derive(Debug, Clone, Copy)]
pub struct QueryCase<'a> {
    pub automaton: &'a BundleAutomaton,
    pub source: &'a Program,
    pub target: &'a Program,
    pub model: &'a AttackModel,
    pub buffer_bound: usize,
    pub logic: &'a str,
}

fn int(n: i64) -> String {
    if n < 0 {
        format!("(- {})", n.unsigned_abs())
    } else {
        n.to_string()
    }
}

fn and(xs: Vec<String>) -> String {
    let xs: Vec<String> = xs.into_iter().filter(|x| x != "true").collect();
    if xs.iter().any(|x| x == "false") {
        return "false".into();
    }
    match xs.len() {
        0 => "true".into(),
        1 => xs.into_iter().next().unwrap(),
        _ => format!("(and {})", xs.join(" ")),
    }
}

fn or(xs: Vec<String>) -> String {
    let xs: Vec<String> = xs.into_iter().filter(|x| x != "false").collect();
    if xs.iter().any(|x| x == "true") {
        return "true".into();
    }
    match xs.len() {
        0 => "false".into(),
        1 => xs.into_iter().next().unwrap(),
        _ => format!("(or {})", xs.join(" ")),
    }
}

fn not(x: &str) -> String {
    match x {
        "true" => "false".into(),
        "false" => "true".into(),
        _ => format!("(not {x})"),
    }
}

fn ite(c: &str, a: &str, b: &str) -> String {
    match c {
        "true" => a.to_string(),
        "false" => b.to_string(),
        _ if a == b => a.to_string(),
        _ => format!("(ite {c} {a} {b})"),
    }
}

fn eq(a: &str, b: &str) -> String {
    if a == b {
        "true".into()
    } else {
        format!("(= {a} {b})")
    }
}

fn is(ctor: &str, e: &str) -> String {
    format!("((_ is {ctor}) {e})")
}

fn chan(c: Channel) -> i64 {
    match c {
        Channel::Secret => 0,
        Channel::Public => 1,
    }
}

/// SMT terms for one program configuration.
#[derive(Debug, Clone)]
struct Cfg {
    loc: String,
    ex: String,
    cells: Vec<String>,
}

/// A symbolic step out of one location: the condition on the pre-state,
/// the condition tying the track letter to it, the letter when the
/// program fixes it, and the successor.
struct Case {
    pre: String,
    letter: String,
    own: Option<String>,
    post: Cfg,
}

/// Symbolic state of a straight-line run.
struct Run {
    cells: Vec<String>,
    acc: Vec<(usize, String)>,
    input: Option<Channel>,
    output: Option<(Channel, String)>,
}

struct Enc<'a> {
    q: QueryCase<'a>,
    acceptor: Acceptor,
    k: usize,
    d: i64,
    /// Array names across both programs; their positions encode `mem` events.
    arrays: Vec<String>,
    /// Cell names a final-memory exposure may carry.
    fin_names: Vec<String>,
    max_acc: usize,
}

fn static_acc(i: &RInstr) -> usize {
    fn e(x: &RExpr) -> usize {
        match x {
            RExpr::Lit(_) | RExpr::Cell(_) => 0,
            RExpr::Elem(_, i) => 1 + e(i),
            RExpr::Not(a) | RExpr::Neg(a) => e(a),
            RExpr::Bin(_, a, b) => e(a) + e(b),
            RExpr::Cond(c, a, b) => e(c) + e(a) + e(b),
        }
    }
    match i {
        RInstr::Assign(_, x) | RInstr::Output(_, x) | RInstr::Branch(x, _, _) => e(x),
        RInstr::Store(_, i, v) => 1 + e(i) + e(v),
        RInstr::Block(xs) => xs.iter().map(static_acc).sum(),
        RInstr::Choice(alts) => alts.iter().map(|a| a.iter().map(static_acc).sum()).max().unwrap_or(0),
        _ => 0,
    }
}

fn has_elem(x: &RExpr) -> bool {
    match x {
        RExpr::Lit(_) | RExpr::Cell(_) => false,
        RExpr::Elem(..) => true,
        RExpr::Not(a) | RExpr::Neg(a) => has_elem(a),
        RExpr::Bin(_, a, b) => has_elem(a) || has_elem(b),
        RExpr::Cond(c, a, b) => has_elem(c) || has_elem(a) || has_elem(b),
    }
}

impl<'a> Enc<'a> {
    fn new(q: QueryCase<'a>) -> Self {
        let acceptor = acceptor_for(q.automaton, q.source, q.target, q.model, q.buffer_bound);
        let mut arrays: Vec<String> = Vec::new();
        let mut fin_names: Vec<String> = Vec::new();
        let mut max_acc = 1;
        for p in [q.source, q.target] {
            for a in &p.arrays {
                if !arrays.iter().any(|n| **n == *a.name) {
                    arrays.push(a.name.to_string());
                }
            }
            for c in p.exposed_cells(q.model) {
                let n = p.cell_names[c].to_string();
                if !fin_names.contains(&n) {
                    fin_names.push(n);
                }
            }
            max_acc = p.code().iter().map(static_acc).fold(max_acc, usize::max);
        }
        Enc {
            k: q.automaton.k,
            d: q.source.domain,
            q,
            acceptor,
            arrays,
            fin_names,
            max_acc,
        }
    }

    fn prog(&self, side: Side) -> &'a Program {
        match side {
            Side::T => self.q.target,
            Side::S => self.q.source,
        }
    }

    fn buffered(&self) -> Option<usize> {
        self.acceptor.bound()
    }

    fn loc_sym(&self, side: Side, l: usize) -> String {
        format!("|{side}.{}|", self.prog(side).loc_name(l))
    }

    fn q_sym(&self, q: usize) -> String {
        format!("|q.{}|", self.q.automaton.states[q])
    }

    fn reduce(&self, x: &str) -> String {
        format!("(mod {x} {})", self.d)
    }

    fn truthy(&self, x: &str) -> String {
        format!("(not (= (mod {x} {}) 0))", self.d)
    }

    fn eq_mod(&self, a: &str, b: &str) -> String {
        if a == b {
            return "true".into();
        }
        format!("(= (mod (- {a} {b}) {}) 0)", self.d)
    }

    fn bin(&self, op: BinOp, a: &str, b: &str) -> String {
        let flag = |c: String| ite(&c, "1", "0");
        match op {
            BinOp::Add => format!("(+ {a} {b})"),
            BinOp::Sub => format!("(- {a} {b})"),
            BinOp::Mul => format!("(* {a} {b})"),
            BinOp::Div => format!("(ite (= {b} 0) 0 (div {a} {b}))"),
            BinOp::Mod => format!("(ite (= {b} 0) 0 (mod {a} {b}))"),
            BinOp::Eq => flag(self.eq_mod(a, b)),
            BinOp::Ne => flag(not(&self.eq_mod(a, b))),
            BinOp::Lt => flag(format!("(< {a} {b})")),
            BinOp::Le => flag(format!("(<= {a} {b})")),
            BinOp::Gt => flag(format!("(> {a} {b})")),
            BinOp::Ge => flag(format!("(>= {a} {b})")),
            BinOp::And => flag(and(vec![self.truthy(a), self.truthy(b)])),
            BinOp::Or => flag(or(vec![self.truthy(a), self.truthy(b)])),
        }
    }

    // -----------------------------------------------------------------
    // Events

    fn event_term(&self, e: &Event) -> String {
        match e {
            Event::Eps => "eps".into(),
            Event::Bot => "bot".into(),
            Event::Input { chan: c, val } => format!("(inp {} {})", chan(*c), int(*val)),
            Event::Output { chan: c, val } => format!("(outp {} {})", chan(*c), int(*val)),
            Event::Ext(Ext::Branch(b)) => format!("(br {})", *b as i64),
            Event::Ext(Ext::Mem(acc)) => {
                let acc: Vec<(usize, String)> = acc
                    .iter()
                    .map(|(a, i)| (self.array_id(a), int(*i)))
                    .collect();
                self.mem_term(&acc)
            }
            Event::Ext(Ext::Final(vals)) => {
                let fields: Vec<String> = self
                    .fin_names
                    .iter()
                    .map(|n| vals.iter().find(|(m, _)| **m == **n).map_or(int(-1), |(_, v)| int(*v)))
                    .collect();
                if fields.is_empty() {
                    "fin".into()
                } else {
                    format!("(fin {})", fields.join(" "))
                }
            }
        }
    }

    fn array_id(&self, name: &str) -> usize {
        self.arrays.iter().position(|a| a == name).unwrap_or(usize::MAX)
    }

    fn mem_term(&self, acc: &[(usize, String)]) -> String {
        let mut s = format!("(mem {}", acc.len());
        for j in 0..self.max_acc {
            match acc.get(j) {
                Some((a, i)) => write!(s, " {a} {i}").unwrap(),
                None => s.push_str(" 0 0"),
            }
        }
        s.push(')');
        s
    }

    fn is_num(e: &str) -> String {
        or(vec![is("inp", e), is("outp", e)])
    }

    fn is_ext(e: &str) -> String {
        or(vec![is("mem", e), is("br", e), is("fin", e)])
    }

    fn num_val(e: &str) -> String {
        format!("(ite {} (inp_val {e}) (outp_val {e}))", is("inp", e))
    }

    fn in_class(&self, c: &EventClass, e: &str) -> String {
        let io = |ctor: &str, field: &str, ch: &Option<Channel>| match ch {
            None => is(ctor, e),
            Some(c) => and(vec![is(ctor, e), format!("(= ({field} {e}) {})", chan(*c))]),
        };
        match c {
            EventClass::Inputs(ch) => io("inp", "inp_ch", ch),
            EventClass::Outputs(ch) => io("outp", "outp_ch", ch),
            EventClass::Low => or(vec![
                io("inp", "inp_ch", &Some(Channel::Public)),
                io("outp", "outp_ch", &Some(Channel::Public)),
                is("fin", e),
            ]),
            EventClass::Ext => Self::is_ext(e),
            EventClass::All => not(&is("eps", e)),
            EventClass::Nothing => "false".into(),
        }
    }

    /// `(defined, value)` of a guard term.
    fn guard_term(&self, t: &Term, ev: &[String]) -> (String, String) {
        match t {
            Term::Lit(n) => ("true".into(), int(*n)),
            Term::Val(i) => {
                let e = &ev[*i];
                let defined = or(vec![
                    Self::is_num(e),
                    is("br", e),
                    and(vec![is("mem", e), format!("(= (mem_n {e}) 1)")]),
                ]);
                let value = format!(
                    "(ite {} {} (ite {} (br_val {e}) (mem_i0 {e})))",
                    Self::is_num(e),
                    Self::num_val(e),
                    is("br", e)
                );
                (defined, value)
            }
            Term::Mem(i, x) => {
                let e = &ev[*i];
                match self.fin_names.iter().position(|n| n == x) {
                    Some(_) => {
                        let v = format!("(|fin.{x}| {e})");
                        (and(vec![is("fin", e), format!("(>= {v} 0)")]), v)
                    }
                    None => ("false".into(), "0".into()),
                }
            }
        }
    }

    fn guard(&self, g: &Guard, ev: &[String]) -> String {
        match g {
            Guard::True => "true".into(),
            Guard::False => "false".into(),
            Guard::Kind(i, k) => {
                let e = &ev[*i];
                match *k {
                    "eps" => is("eps", e),
                    "bot" => is("bot", e),
                    "input" => is("inp", e),
                    "output" => is("outp", e),
                    "ext" => Self::is_ext(e),
                    _ => "false".into(),
                }
            }
            Guard::Chan(i, c) => {
                let e = &ev[*i];
                or(vec![
                    and(vec![is("inp", e), format!("(= (inp_ch {e}) {})", chan(*c))]),
                    and(vec![is("outp", e), format!("(= (outp_ch {e}) {})", chan(*c))]),
                ])
            }
            Guard::ExtIs(i, k) => is(
                match k {
                    ExtKind::Mem => "mem",
                    ExtKind::Branch => "br",
                    ExtKind::Final => "fin",
                },
                &ev[*i],
            ),
            Guard::Cmp(op @ (CmpOp::Eq | CmpOp::Ne), Term::Val(i), Term::Val(j)) => {
                let (a, b) = (&ev[*i], &ev[*j]);
                let has = |e: &str| or(vec![Self::is_num(e), Self::is_ext(e)]);
                let same = or(vec![
                    and(vec![Self::is_num(a), Self::is_num(b), eq(&Self::num_val(a), &Self::num_val(b))]),
                    and(vec![Self::is_ext(a), Self::is_ext(b), eq(a, b)]),
                ]);
                let test = if *op == CmpOp::Eq { same } else { not(&same) };
                and(vec![has(a), has(b), test])
            }
            Guard::Cmp(op, a, b) => {
                let (da, va) = self.guard_term(a, ev);
                let (db, vb) = self.guard_term(b, ev);
                let test = match op {
                    CmpOp::Eq => format!("(= {va} {vb})"),
                    CmpOp::Ne => format!("(not (= {va} {vb}))"),
                    CmpOp::Lt => format!("(< {va} {vb})"),
                    CmpOp::Le => format!("(<= {va} {vb})"),
                    CmpOp::Gt => format!("(> {va} {vb})"),
                    CmpOp::Ge => format!("(>= {va} {vb})"),
                };
                and(vec![da, db, test])
            }
            Guard::Agree(i, j, c) => {
                let (a, b) = (&ev[*i], &ev[*j]);
                let (ca, cb) = (self.in_class(c, a), self.in_class(c, b));
                or(vec![and(vec![not(&ca), not(&cb)]), and(vec![ca, cb, eq(a, b)])])
            }
            Guard::Not(x) => not(&self.guard(x, ev)),
            Guard::And(x, y) => and(vec![self.guard(x, ev), self.guard(y, ev)]),
            Guard::Or(x, y) => or(vec![self.guard(x, ev), self.guard(y, ev)]),
        }
    }

    // -----------------------------------------------------------------
    // Declarations

    fn declarations(&self, out: &mut String) {
        let mut ev = vec![
            "(eps)".to_string(),
            "(bot)".to_string(),
            "(inp (inp_ch Int) (inp_val Int))".to_string(),
            "(outp (outp_ch Int) (outp_val Int))".to_string(),
            "(br (br_val Int))".to_string(),
        ];
        let mut mem = "(mem (mem_n Int)".to_string();
        for j in 0..self.max_acc {
            write!(mem, " (mem_a{j} Int) (mem_i{j} Int)").unwrap();
        }
        mem.push(')');
        ev.push(mem);
        let mut fin = "(fin".to_string();
        for n in &self.fin_names {
            write!(fin, " (|fin.{n}| Int)").unwrap();
        }
        fin.push(')');
        ev.push(fin);
        let locs = |side: Side| -> String {
            let p = self.prog(side);
            (0..=p.end()).map(|l| format!("({})", self.loc_sym(side, l))).collect::<Vec<_>>().join(" ")
        };
        let qs: Vec<String> = (0..self.q.automaton.states.len()).map(|q| format!("({})", self.q_sym(q))).collect();
        writeln!(out, "; arrays in mem events: {}", if self.arrays.is_empty() { "none".to_string() } else {
            self.arrays.iter().enumerate().map(|(i, a)| format!("{a}={i}")).collect::<Vec<_>>().join(", ")
        }).unwrap();
        writeln!(
            out,
            "(declare-datatypes ((Event 0) (Q 0) (LocT 0) (LocS 0)) (({}) ({}) ({}) ({})))",
            ev.join(" "),
            qs.join(" "),
            locs(Side::T),
            locs(Side::S)
        )
        .unwrap();
        let k = self.k;
        let letters: Vec<String> = (1..=k).map(|i| format!("(e{i} Event)")).collect();
        let evs: Vec<String> = (1..=k).map(|i| format!("e{i}")).collect();
        let a = self.q.automaton;
        let delta = or(a
            .trans
            .iter()
            .map(|t| {
                and(vec![
                    format!("(= q {})", self.q_sym(t.from)),
                    format!("(= q2 {})", self.q_sym(t.to)),
                    self.guard(&t.guard, &evs),
                ])
            })
            .collect());
        writeln!(out, "(define-fun Delta ((q Q) {} (q2 Q)) Bool\n  {delta})", letters.join(" ")).unwrap();
        let f = or((0..a.states.len())
            .filter(|&q| a.is_accepting(q))
            .map(|q| format!("(= q {})", self.q_sym(q)))
            .collect());
        writeln!(out, "(define-fun F ((q Q)) Bool {f})").unwrap();
        match self.buffered() {
            None => {
                writeln!(out, "(define-sort AS () Q)").unwrap();
                writeln!(out, "(define-fun Rel ((a AS) {} (b AS)) Bool (Delta a {} b))", letters.join(" "), evs.join(" ")).unwrap();
                writeln!(out, "(define-fun Step ((a AS) {} (b AS)) Bool (Delta a {} b))", letters.join(" "), evs.join(" ")).unwrap();
                writeln!(out, "(define-fun Acc ((a AS)) Bool (F a))").unwrap();
                writeln!(out, "(define-fun QEq ((a AS) (b AS)) Bool (= a b))").unwrap();
                writeln!(out, "(define-fun WF ((a AS)) Bool true)").unwrap();
            }
            Some(bound) => self.buffered_defs(out, bound, &letters, &evs),
        }
    }

    fn buffered_defs(&self, out: &mut String, bound: usize, letters: &[String], evs: &[String]) {
        let k = self.k;
        let mut fields = vec!["(aq Q)".to_string(), "(bit Bool)".to_string()];
        for i in 1..=k {
            fields.push(format!("(len{i} Int)"));
            for j in 0..bound {
                fields.push(format!("(b{i}_{j} Event)"));
            }
        }
        writeln!(out, "(declare-datatypes ((AS 0)) (((mk_as {}))))", fields.join(" ")).unwrap();
        // buffer contents after appending the letter, slots 0..=bound
        let slot = |i: usize, j: usize| -> String {
            let e = &evs[i - 1];
            let push = and(vec![format!("(= (len{i} a) {j})"), not(&is("eps", e))]);
            let pushed = ite(&push, e, "eps");
            if j < bound {
                format!("(ite (< {j} (len{i} a)) (b{i}_{j} a) {pushed})")
            } else {
                pushed
            }
        };
        let n = |i: usize| format!("(+ (len{i} a) (ite {} 0 1))", is("eps", &evs[i - 1]));
        let full = and((1..=k).map(|i| format!("(> {} 0)", n(i))).collect());
        let heads: Vec<String> = (1..=k).map(|i| slot(i, 0)).collect();
        let mut popped = vec![format!("(Delta (aq a) {} (aq b))", heads.join(" "))];
        let mut kept = vec!["(= (aq b) (aq a))".to_string()];
        for i in 1..=k {
            popped.push(format!("(<= (- {} 1) {bound})", n(i)));
            popped.push(format!("(= (len{i} b) (- {} 1))", n(i)));
            kept.push(format!("(<= {} {bound})", n(i)));
            kept.push(format!("(= (len{i} b) {})", n(i)));
            for j in 0..bound {
                popped.push(format!("(= (b{i}_{j} b) {})", slot(i, j + 1)));
                kept.push(format!("(= (b{i}_{j} b) {})", slot(i, j)));
            }
        }
        writeln!(out, "(define-fun Full ((a AS) {}) Bool\n  {full})", letters.join(" ")).unwrap();
        writeln!(
            out,
            "(define-fun Rel ((a AS) {} (b AS)) Bool\n  (ite (Full a {})\n    {}\n    {}))",
            letters.join(" "),
            evs.join(" "),
            and(popped),
            and(kept)
        )
        .unwrap();
        writeln!(
            out,
            "(define-fun Step ((a AS) {} (b AS)) Bool (and (Rel a {} b) (= (bit b) (Full a {}))))",
            letters.join(" "),
            evs.join(" "),
            evs.join(" ")
        )
        .unwrap();
        writeln!(out, "(define-fun Acc ((a AS)) Bool (and (F (aq a)) (bit a)))").unwrap();
        let mut same = vec!["(= (aq a) (aq b))".to_string()];
        let mut wf = Vec::new();
        for i in 1..=k {
            same.push(format!("(= (len{i} a) (len{i} b))"));
            wf.push(format!("(<= 0 (len{i} a) {bound})"));
            for j in 0..bound {
                same.push(format!("(= (b{i}_{j} a) (b{i}_{j} b))"));
                wf.push(format!("(= (< {j} (len{i} a)) (not {}))", is("eps", &format!("(b{i}_{j} a)"))));
            }
        }
        wf.push(not(&and((1..=k).map(|i| format!("(> (len{i} a) 0)")).collect())));
        writeln!(out, "(define-fun QEq ((a AS) (b AS)) Bool {})", and(same)).unwrap();
        writeln!(out, "(define-fun WF ((a AS)) Bool {})", and(wf)).unwrap();
    }

    fn initial_aut(&self) -> String {
        let q0 = self.q_sym(self.q.automaton.initial);
        match self.buffered() {
            None => q0,
            Some(bound) => {
                let mut s = format!("(mk_as {q0} false");
                for _ in 0..self.k {
                    s.push_str(" 0");
                    for _ in 0..bound {
                        s.push_str(" eps");
                    }
                }
                s.push(')');
                s
            }
        }
    }

    /// `a` with its progress bit cleared.
    fn without_bit(&self, a: &str) -> String {
        match self.buffered() {
            None => a.to_string(),
            Some(bound) => {
                let mut s = format!("(mk_as (aq {a}) false");
                for i in 1..=self.k {
                    write!(s, " (len{i} {a})").unwrap();
                    for j in 0..bound {
                        write!(s, " (b{i}_{j} {a})").unwrap();
                    }
                }
                s.push(')');
                s
            }
        }
    }

    fn aq(&self, a: &str) -> String {
        match self.buffered() {
            None => a.to_string(),
            Some(_) => format!("(aq {a})"),
        }
    }

    fn declare_cfg(&self, out: &mut String, side: Side, name: &str) -> Cfg {
        let p = self.prog(side);
        let cfg = Cfg {
            loc: format!("|{name}.loc|"),
            ex: format!("|{name}.exposed|"),
            cells: p.cell_names.iter().map(|c| format!("|{name}.{c}|")).collect(),
        };
        writeln!(out, "(declare-const {} Loc{side})", cfg.loc).unwrap();
        writeln!(out, "(declare-const {} Bool)", cfg.ex).unwrap();
        for c in &cfg.cells {
            writeln!(out, "(declare-const {c} Int)").unwrap();
        }
        cfg
    }

    fn initial_cfg(&self, side: Side) -> Cfg {
        let p = self.prog(side);
        let c = p.initial_config();
        Cfg {
            loc: self.loc_sym(side, c.loc),
            ex: "false".into(),
            cells: vec!["0".into(); p.num_cells()],
        }
    }

    fn in_range(&self, cfg: &Cfg) -> String {
        and(cfg.cells.iter().map(|c| format!("(<= 0 {c} {})", self.d - 1)).collect())
    }

    // -----------------------------------------------------------------
    // Program semantics

    fn unsupported(&self, side: Side, l: usize, what: &str) -> SmtError {
        SmtError::Unsupported {
            side,
            label: self.prog(side).loc_name(l).to_string(),
            what: what.to_string(),
        }
    }

    fn expr(&self, p: &Program, e: &RExpr, run: &mut Run) -> Result<String, String> {
        Ok(match e {
            RExpr::Lit(n) => int(*n),
            RExpr::Cell(c) => run.cells[*c].clone(),
            RExpr::Elem(a, i) => {
                let i = self.expr(p, i, run)?;
                let arr = &p.arrays[*a];
                let ix = format!("(mod {i} {})", arr.len);
                run.acc.push((self.array_id(&arr.name), ix.clone()));
                let mut v = run.cells[arr.base + arr.len - 1].clone();
                for j in (0..arr.len - 1).rev() {
                    v = ite(&format!("(= {ix} {j})"), &run.cells[arr.base + j], &v);
                }
                v
            }
            RExpr::Not(x) => {
                let x = self.expr(p, x, run)?;
                ite(&self.truthy(&x), "0", "1")
            }
            RExpr::Neg(x) => format!("(- {})", self.expr(p, x, run)?),
            RExpr::Bin(op, a, b) => {
                let a = self.expr(p, a, run)?;
                let b = self.expr(p, b, run)?;
                self.bin(*op, &a, &b)
            }
            RExpr::Cond(c, a, b) => {
                if has_elem(a) || has_elem(b) {
                    return Err("a conditional array read".into());
                }
                let c = self.expr(p, c, run)?;
                let a = self.expr(p, a, run)?;
                let b = self.expr(p, b, run)?;
                ite(&self.truthy(&c), &a, &b)
            }
        })
    }

    fn exec(&self, p: &Program, xs: &[RInstr], run: &mut Run, ev: &str) -> Result<(), String> {
        for x in xs {
            match x {
                RInstr::Input(c, ch) => {
                    run.cells[*c] = format!("(inp_val {ev})");
                    run.input = Some(*ch);
                }
                RInstr::Assign(c, e) => {
                    let v = self.expr(p, e, run)?;
                    run.cells[*c] = self.reduce(&v);
                }
                RInstr::Store(a, i, e) => {
                    let i = self.expr(p, i, run)?;
                    let v = self.expr(p, e, run)?;
                    let arr = &p.arrays[*a];
                    let ix = format!("(mod {i} {})", arr.len);
                    run.acc.push((self.array_id(&arr.name), ix.clone()));
                    let v = self.reduce(&v);
                    for j in 0..arr.len {
                        let old = run.cells[arr.base + j].clone();
                        run.cells[arr.base + j] = ite(&format!("(= {ix} {j})"), &v, &old);
                    }
                }
                RInstr::Output(ch, e) => {
                    let v = self.expr(p, e, run)?;
                    run.output = Some((*ch, self.reduce(&v)));
                }
                RInstr::Skip => {}
                _ => return Err("control flow inside a block".into()),
            }
        }
        Ok(())
    }

    /// Letter condition and fixed letter of a finished straight-line run.
    fn run_letter(&self, run: &Run, ev: &str) -> (String, Option<String>) {
        let m = self.q.model;
        if let Some(ch) = run.input {
            let cond = and(vec![
                is("inp", ev),
                format!("(= (inp_ch {ev}) {})", chan(ch)),
                format!("(<= 0 (inp_val {ev}) {})", self.d - 1),
            ]);
            return (cond, None);
        }
        let own = match &run.output {
            Some((ch, v)) if m.io => format!("(outp {} {v})", chan(*ch)),
            _ if m.mem_access && !run.acc.is_empty() => self.mem_term(&run.acc),
            _ => "eps".into(),
        };
        (eq(ev, &own), Some(own))
    }

    fn cases(&self, side: Side, l: usize, pre: &Cfg, ev: &str) -> Result<Vec<Case>, SmtError> {
        let p = self.prog(side);
        let m = self.q.model;
        let at = |loc: usize, cells: Vec<String>| Cfg {
            loc: self.loc_sym(side, loc),
            ex: pre.ex.clone(),
            cells,
        };
        let fixed = |own: String, post: Cfg, pre_cond: String| Case {
            pre: pre_cond,
            letter: eq(ev, &own),
            own: Some(own),
            post,
        };
        if l >= p.end() {
            let stay = pre.clone();
            if !m.final_memory {
                return Ok(vec![fixed("bot".into(), stay, "true".into())]);
            }
            let exposed: Vec<String> = self
                .fin_names
                .iter()
                .map(|n| match p.cell_index(n) {
                    Some(c) if p.exposed_cells(m).contains(&c) => pre.cells[c].clone(),
                    _ => int(-1),
                })
                .collect();
            let fin = if exposed.is_empty() { "fin".to_string() } else { format!("(fin {})", exposed.join(" ")) };
            let mut shown = pre.clone();
            shown.ex = "true".into();
            return Ok(vec![
                fixed(fin, shown, not(&pre.ex)),
                fixed("bot".into(), stay, pre.ex.clone()),
            ]);
        }
        let cells = pre.cells.clone();
        let fresh = || Run {
            cells: pre.cells.clone(),
            acc: Vec::new(),
            input: None,
            output: None,
        };
        let seq_case = |xs: &[RInstr]| -> Result<Case, SmtError> {
            let mut run = fresh();
            self.exec(p, xs, &mut run, ev).map_err(|w| self.unsupported(side, l, &w))?;
            let (letter, own) = self.run_letter(&run, ev);
            Ok(Case {
                pre: "true".into(),
                letter,
                own,
                post: at(l + 1, run.cells),
            })
        };
        Ok(match &p.code()[l] {
            RInstr::Goto(to) => vec![fixed("eps".into(), at(*to, cells), "true".into())],
            RInstr::Halt => vec![fixed("eps".into(), at(p.end(), cells), "true".into())],
            RInstr::Skip => vec![fixed("eps".into(), at(l + 1, cells), "true".into())],
            RInstr::Branch(c, a, b) => {
                let mut run = fresh();
                let c = self.expr(p, c, &mut run).map_err(|w| self.unsupported(side, l, &w))?;
                let taken = self.truthy(&c);
                let own = if m.branch {
                    format!("(br {})", ite(&taken, "1", "0"))
                } else if m.mem_access && !run.acc.is_empty() {
                    self.mem_term(&run.acc)
                } else {
                    "eps".into()
                };
                let post = Cfg {
                    loc: ite(&taken, &self.loc_sym(side, *a), &self.loc_sym(side, *b)),
                    ex: pre.ex.clone(),
                    cells,
                };
                vec![fixed(own, post, "true".into())]
            }
            RInstr::Choice(alts) => alts.iter().map(|alt| seq_case(alt)).collect::<Result<_, _>>()?,
            RInstr::Block(xs) => vec![seq_case(xs)?],
            single => vec![seq_case(std::slice::from_ref(single))?],
        })
    }

    /// Every case of every location of one track.
    fn all_cases(&self, side: Side, pre: &Cfg, ev: &str) -> Result<Vec<(usize, Case)>, SmtError> {
        let mut out = Vec::new();
        for l in 0..=self.prog(side).end() {
            for c in self.cases(side, l, pre, ev)? {
                out.push((l, c));
            }
        }
        Ok(out)
    }

    fn at_loc(&self, side: Side, cfg: &Cfg, l: usize) -> String {
        eq(&cfg.loc, &self.loc_sym(side, l))
    }

    fn step_relation(&self, side: Side, pre: &Cfg, ev: &str, post: &Cfg) -> Result<String, SmtError> {
        let mut alts = Vec::new();
        for (l, c) in self.all_cases(side, pre, ev)? {
            let mut xs = vec![self.at_loc(side, pre, l), c.pre, c.letter, eq(&post.loc, &c.post.loc), eq(&post.ex, &c.post.ex)];
            xs.extend(post.cells.iter().zip(&c.post.cells).map(|(a, b)| eq(a, b)));
            alts.push(and(xs));
        }
        Ok(or(alts))
    }

    /// The successor picked by the first enabled case, and whether any is.
    fn successor(&self, cases: &[(usize, Case)], side: Side, pre: &Cfg) -> (String, Cfg) {
        let conds: Vec<String> = cases
            .iter()
            .map(|(l, c)| and(vec![self.at_loc(side, pre, *l), c.pre.clone(), c.letter.clone()]))
            .collect();
        let pick = |f: &dyn Fn(&Cfg) -> &String, default: &String| -> String {
            let mut v = default.clone();
            for ((_, c), cond) in cases.iter().zip(&conds).rev() {
                v = ite(cond, f(&c.post), &v);
            }
            v
        };
        let post = Cfg {
            loc: pick(&|c| &c.loc, &pre.loc),
            ex: pick(&|c| &c.ex, &pre.ex),
            cells: (0..pre.cells.len()).map(|i| pick(&|c| &c.cells[i], &pre.cells[i])).collect(),
        };
        (or(conds), post)
    }
}

/// Binds witness formulas to SMT terms.
struct Bind<'e, 'a> {
    enc: &'e Enc<'a>,
    cx: &'e Ctx<'a>,
    tq: String,
    sq: String,
    t: &'e [Cfg],
    s: &'e [Cfg],
}

impl Bind<'_, '_> {
    fn cfg(&self, side: Side, track: usize) -> &Cfg {
        match side {
            Side::T => &self.t[track],
            Side::S => &self.s[track],
        }
    }

    fn track(tr: Track, cur: usize) -> usize {
        match tr {
            Track::Cur => cur,
            Track::Fixed(i) => i,
        }
    }

    fn loc_pairs(&self, tl: &str, sl: &str) -> String {
        let t = self.enc.prog(Side::T);
        or((0..=t.end())
            .filter_map(|l| {
                self.cx.t_to_s(l).map(|m| {
                    and(vec![
                        eq(tl, &self.enc.loc_sym(Side::T, l)),
                        eq(sl, &self.enc.loc_sym(Side::S, m)),
                    ])
                })
            })
            .collect())
    }

    fn elem(&self, cells: &[String], base: usize, len: usize, ix: &str) -> String {
        let ix = format!("(mod {ix} {len})");
        let mut v = cells[base + len - 1].clone();
        for j in (0..len - 1).rev() {
            v = ite(&format!("(= {ix} {j})"), &cells[base + j], &v);
        }
        v
    }

    fn int(&self, e: &IExpr, cur: usize) -> String {
        match e {
            IExpr::Lit(n) => int(*n),
            IExpr::Cell(side, tr, c) => self.cfg(*side, Self::track(*tr, cur)).cells[*c].clone(),
            IExpr::Elem { side, track, base, len, index } => {
                let ix = self.int(index, cur);
                self.elem(&self.cfg(*side, Self::track(*track, cur)).cells, *base, *len, &ix)
            }
            IExpr::Op(op, a, b) => self.enc.bin(*op, &self.int(a, cur), &self.int(b, cur)),
            IExpr::Neg(a) => format!("(- {})", self.int(a, cur)),
            IExpr::Ite(c, a, b) => ite(&self.bool(c, cur), &self.int(a, cur), &self.int(b, cur)),
            IExpr::Sum(x) => {
                let xs: Vec<String> = (0..self.enc.k).map(|i| self.int(x, i)).collect();
                if xs.len() == 1 {
                    xs[0].clone()
                } else {
                    format!("(+ {})", xs.join(" "))
                }
            }
        }
    }

    fn alpha_value(&self, a: &AlphaTerm, cur: usize, cell: usize) -> String {
        let cfg = self.cfg(a.side, Self::track(a.track, cur));
        let mut v = cfg.cells[cell].clone();
        for (target, val) in &a.updates {
            let hit = match target {
                Target::Cell(c) => (if *c == cell { "true" } else { "false" }).to_string(),
                Target::Elem { base, len, index } => {
                    if cell < *base || cell >= base + len {
                        "false".into()
                    } else {
                        format!("(= (mod {} {len}) {})", self.int(index, cur), cell - base)
                    }
                }
            };
            v = ite(&hit, &self.enc.reduce(&self.int(val, cur)), &v);
        }
        v
    }

    fn cells_eq(&self, t: &Cfg, s: &Cfg, pairs: &[(usize, usize)]) -> String {
        and(pairs.iter().map(|&(a, b)| self.enc.eq_mod(&t.cells[a], &s.cells[b])).collect())
    }

    fn bool(&self, e: &BExpr, cur: usize) -> String {
        let enc = self.enc;
        let side_q = |s: Side| match s {
            Side::T => &self.tq,
            Side::S => &self.sq,
        };
        match e {
            BExpr::Const(b) => b.to_string(),
            BExpr::QEq => format!("(QEq {} {})", self.tq, self.sq),
            BExpr::QIs(side, q) => eq(&enc.aq(side_q(*side)), &enc.q_sym(*q)),
            BExpr::Delta(letter) => {
                let ls: Vec<String> = letter.iter().map(|e| enc.event_term(e)).collect();
                format!("(Rel {} {} {})", self.sq, ls.join(" "), self.tq)
            }
            BExpr::StateEq => {
                let pairs = self.cx.same_cells().unwrap_or(&[]);
                and((0..enc.k)
                    .map(|i| {
                        let (t, s) = (&self.t[i], &self.s[i]);
                        and(vec![self.loc_pairs(&t.loc, &s.loc), eq(&t.ex, &s.ex), self.cells_eq(t, s, pairs)])
                    })
                    .collect())
            }
            BExpr::LocIs(side, tr, l) => eq(&self.cfg(*side, Self::track(*tr, cur)).loc, &enc.loc_sym(*side, *l)),
            BExpr::LocEq(sa, ta, sb, tb) => {
                let la = &self.cfg(*sa, Self::track(*ta, cur)).loc;
                let lb = &self.cfg(*sb, Self::track(*tb, cur)).loc;
                match (sa, sb) {
                    (Side::T, Side::S) => self.loc_pairs(la, lb),
                    (Side::S, Side::T) => self.loc_pairs(lb, la),
                    _ => eq(la, lb),
                }
            }
            BExpr::AlphaEq(a, b) => {
                let pairs: Vec<(usize, usize)> = if a.side == b.side {
                    (0..enc.prog(a.side).num_cells()).map(|i| (i, i)).collect()
                } else {
                    let same = self.cx.same_cells().unwrap_or(&[]);
                    if a.side == Side::T {
                        same.to_vec()
                    } else {
                        same.iter().map(|&(t, s)| (s, t)).collect()
                    }
                };
                and(pairs
                    .iter()
                    .map(|&(x, y)| enc.eq_mod(&self.alpha_value(a, cur, x), &self.alpha_value(b, cur, y)))
                    .collect())
            }
            BExpr::EqOn(tr, pairs) => {
                let i = Self::track(*tr, cur);
                self.cells_eq(&self.t[i], &self.s[i], pairs)
            }
            BExpr::Pairs(tr, m) => {
                let i = Self::track(*tr, cur);
                let mut alts = Vec::new();
                for (sl, row) in m.iter().enumerate() {
                    for (tl, ok) in row.iter().enumerate() {
                        if *ok {
                            alts.push(and(vec![
                                eq(&self.s[i].loc, &enc.loc_sym(Side::S, sl)),
                                eq(&self.t[i].loc, &enc.loc_sym(Side::T, tl)),
                            ]));
                        }
                    }
                }
                or(alts)
            }
            BExpr::Sigma(tr, table) => {
                let i = Self::track(*tr, cur);
                and(table
                    .iter()
                    .enumerate()
                    .filter(|(_, row)| !row.is_empty())
                    .map(|(l, row)| {
                        format!(
                            "(=> {} {})",
                            eq(&self.t[i].loc, &enc.loc_sym(Side::T, l)),
                            self.cells_eq(&self.t[i], &self.s[i], row)
                        )
                    })
                    .collect())
            }
            BExpr::Synced(side) => {
                let l0 = &self.cfg(*side, 0).loc;
                and((1..enc.k).map(|i| eq(l0, &self.cfg(*side, i).loc)).collect())
            }
            BExpr::Truthy(x) => enc.truthy(&self.int(x, cur)),
            BExpr::Cmp(op, a, b) => {
                let (a, b) = (self.int(a, cur), self.int(b, cur));
                match op {
                    CmpOp::Eq => enc.eq_mod(&a, &b),
                    CmpOp::Ne => not(&enc.eq_mod(&a, &b)),
                    CmpOp::Lt => format!("(< {a} {b})"),
                    CmpOp::Le => format!("(<= {a} {b})"),
                    CmpOp::Gt => format!("(> {a} {b})"),
                    CmpOp::Ge => format!("(>= {a} {b})"),
                }
            }
            BExpr::Not(x) => not(&self.bool(x, cur)),
            BExpr::And(xs) => and(xs.iter().map(|x| self.bool(x, cur)).collect()),
            BExpr::Or(xs) => or(xs.iter().map(|x| self.bool(x, cur)).collect()),
            BExpr::Implies(a, b) => or(vec![not(&self.bool(a, cur)), self.bool(b, cur)]),
            BExpr::Iff(a, b) => format!("(= {} {})", self.bool(a, cur), self.bool(b, cur)),
            BExpr::Ite(c, a, b) => ite(&self.bool(c, cur), &self.bool(a, cur), &self.bool(b, cur)),
            BExpr::All(x) => and((0..enc.k).map(|i| self.bool(x, i)).collect()),
            BExpr::Any(x) => or((0..enc.k).map(|i| self.bool(x, i)).collect()),
        }
    }
}

fn header(out: &mut String, what: &str, q: &QueryCase, w: &Witness, enc: &Enc) {
    writeln!(out, "; {what} for witness of {} against automaton {}", w.property, q.automaton.name).unwrap();
    writeln!(
        out,
        "; {} tracks, domain {}, attack model {}, {}",
        enc.k,
        enc.d,
        q.model.name,
        match enc.buffered() {
            Some(b) => format!("buffered acceptor (bound {b})"),
            None => "plain acceptor".into(),
        }
    )
    .unwrap();
    writeln!(out, "; unsat means the case holds").unwrap();
    writeln!(out, "(set-option :produce-models true)").unwrap();
    writeln!(out, "(set-logic {})", q.logic).unwrap();
}

fn compile(enc: &Enc, w: &Witness) -> Result<(BExpr, Option<IExpr>), SmtError> {
    let cx = Ctx::new(enc.q.source, enc.q.target, Some(&enc.acceptor), enc.k);
    let r = cx.compile_bool(&w.r)?.flatten();
    let rank = match &w.stutter {
        Some(st) => Some(cx.compile_int(&st.rank)?),
        None => None,
    };
    Ok((r, rank))
}

/// `R` on the initial states.
pub fn emit_base_query(q: &QueryCase, w: &Witness) -> Result<String, SmtError> {
    let enc = Enc::new(*q);
    let (r, _) = compile(&enc, w)?;
    let cx = Ctx::new(q.source, q.target, Some(&enc.acceptor), enc.k);
    let mut out = String::new();
    header(&mut out, "base case", q, w, &enc);
    enc.declarations(&mut out);
    let t0: Vec<Cfg> = (0..enc.k).map(|_| enc.initial_cfg(Side::T)).collect();
    let s0: Vec<Cfg> = (0..enc.k).map(|_| enc.initial_cfg(Side::S)).collect();
    let a0 = enc.initial_aut();
    let bind = Bind {
        enc: &enc,
        cx: &cx,
        tq: a0.clone(),
        sq: a0,
        t: &t0,
        s: &s0,
    };
    writeln!(out, "(define-fun R_init () Bool\n  {})", bind.bool(&r, 0)).unwrap();
    writeln!(out, "(assert (not R_init))").unwrap();
    writeln!(out, "(check-sat)").unwrap();
    Ok(out)
}

/// One inductive step: every target step out of an R-related pair is
/// matched by the Skolem source step (or a permitted stutter).
pub fn emit_inductive_query(q: &QueryCase, w: &Witness, sk: &SkolemMap) -> Result<String, SmtError> {
    if !sk.sigma_s_is_target || !sk.p_s_is_target {
        return Err(SmtError::SkolemUnsupported {
            name: "sigmaS".into(),
            term: "?".into(),
        });
    }
    let enc = Enc::new(*q);
    let (r, rank) = compile(&enc, w)?;
    let cx = Ctx::new(q.source, q.target, Some(&enc.acceptor), enc.k);
    let k = enc.k;
    let mut out = String::new();
    header(&mut out, "inductive step", q, w, &enc);
    enc.declarations(&mut out);

    writeln!(out, "; universally quantified").unwrap();
    for n in ["qT", "qS", "pT"] {
        writeln!(out, "(declare-const {n} AS)").unwrap();
    }
    let sigma_t: Vec<String> = (1..=k).map(|i| format!("|sigmaT{i}|")).collect();
    for e in &sigma_t {
        writeln!(out, "(declare-const {e} Event)").unwrap();
    }
    let t: Vec<Cfg> = (1..=k).map(|i| enc.declare_cfg(&mut out, Side::T, &format!("t{i}"))).collect();
    let s: Vec<Cfg> = (1..=k).map(|i| enc.declare_cfg(&mut out, Side::S, &format!("s{i}"))).collect();
    let t2: Vec<Cfg> = (1..=k).map(|i| enc.declare_cfg(&mut out, Side::T, &format!("t{i}'"))).collect();

    let bind = |tq: &str, sq: &str, t: &[Cfg], s: &[Cfg]| -> String {
        Bind {
            enc: &enc,
            cx: &cx,
            tq: tq.to_string(),
            sq: sq.to_string(),
            t,
            s,
        }
        .bool(&r, 0)
    };
    let rank_of = |t: &[Cfg], s: &[Cfg]| -> Option<String> {
        rank.as_ref().map(|x| {
            Bind {
                enc: &enc,
                cx: &cx,
                tq: "qT".into(),
                sq: "qS".into(),
                t,
                s,
            }
            .int(x, 0)
        })
    };

    writeln!(out, "; phi1: a related pair and a target step").unwrap();
    writeln!(out, "(assert (and (WF qT) (WF qS)))").unwrap();
    for c in t.iter().chain(&s) {
        writeln!(out, "(assert {})", enc.in_range(c)).unwrap();
    }
    writeln!(out, "(define-fun R_pre () Bool\n  {})", bind("qT", "qS", &t, &s)).unwrap();
    writeln!(out, "(assert R_pre)").unwrap();
    writeln!(out, "(assert (Step qT {} pT))", sigma_t.join(" ")).unwrap();
    for i in 0..k {
        writeln!(out, "(assert {})", enc.step_relation(Side::T, &t[i], &sigma_t[i], &t2[i])?).unwrap();
    }

    writeln!(out, "; Skolem terms").unwrap();
    let sigma_s: Vec<String> = (1..=k).map(|i| format!("|sigmaS{i}|")).collect();
    for (a, b) in sigma_s.iter().zip(&sigma_t) {
        writeln!(out, "(define-fun {a} () Event {b})").unwrap();
    }
    writeln!(out, "(define-fun pS () AS pT)").unwrap();
    let mut s2 = Vec::new();
    let mut enabled = Vec::new();
    for i in 0..k {
        let cases = enc.all_cases(Side::S, &s[i], &sigma_s[i])?;
        let (en, post) = enc.successor(&cases, Side::S, &s[i]);
        let name = format!("s{}'", i + 1);
        let def = Cfg {
            loc: format!("|{name}.loc|"),
            ex: format!("|{name}.exposed|"),
            cells: q.source.cell_names.iter().map(|c| format!("|{name}.{c}|")).collect(),
        };
        writeln!(out, "(define-fun {} () LocS {})", def.loc, post.loc).unwrap();
        writeln!(out, "(define-fun {} () Bool {})", def.ex, post.ex).unwrap();
        for (n, v) in def.cells.iter().zip(&post.cells) {
            writeln!(out, "(define-fun {n} () Int {v})").unwrap();
        }
        enabled.push(en);
        s2.push(def);
    }

    writeln!(out, "; phi2").unwrap();
    writeln!(out, "(define-fun enabled () Bool {})", and(enabled)).unwrap();
    writeln!(
        out,
        "(define-fun matched () Bool (and enabled (Step qS {} pS) (=> (Acc pT) (Acc pS))\n  {}))",
        sigma_s.join(" "),
        bind("pT", "pS", &t2, &s2)
    )
    .unwrap();
    let mut goal = vec!["matched".to_string()];
    let mut side_conds = Vec::new();
    if let (Some(st), Some(r0)) = (&w.stutter, rank_of(&t, &s)) {
        side_conds.push(format!("(<= 0 {r0} {})", st.bound));
        if st.side.source_stays() {
            let quiet = and(sigma_t.iter().map(|e| not(&enc.in_class(&w.inputs, e))).collect());
            let r1 = rank_of(&t2, &s).expect("rank");
            writeln!(
                out,
                "(define-fun source_stays () Bool (and {quiet} (=> (Acc pT) (Acc qS)) (< {r1} {r0})\n  {}))",
                bind("pT", "qS", &t2, &s)
            )
            .unwrap();
            goal.push("source_stays".into());
        }
        if st.side.target_stays() && enc.buffered().is_some() {
            // only silent source moves are considered; they leave the
            // automaton where it is
            let mut s3 = Vec::new();
            let mut silent = Vec::new();
            for i in 0..k {
                let cases: Vec<(usize, Case)> = enc
                    .all_cases(Side::S, &s[i], "eps")?
                    .into_iter()
                    .filter(|(_, c)| c.own.as_deref() == Some("eps"))
                    .collect();
                let (en, post) = enc.successor(&cases, Side::S, &s[i]);
                let name = format!("s{}''", i + 1);
                let def = Cfg {
                    loc: format!("|{name}.loc|"),
                    ex: format!("|{name}.exposed|"),
                    cells: q.source.cell_names.iter().map(|c| format!("|{name}.{c}|")).collect(),
                };
                writeln!(out, "(define-fun {} () LocS {})", def.loc, post.loc).unwrap();
                writeln!(out, "(define-fun {} () Bool {})", def.ex, post.ex).unwrap();
                for (n, v) in def.cells.iter().zip(&post.cells) {
                    writeln!(out, "(define-fun {n} () Int {v})").unwrap();
                }
                silent.push(en);
                s3.push(def);
            }
            let r2 = rank_of(&t, &s3).expect("rank");
            writeln!(out, "(define-fun pS_stay () AS {})", enc.without_bit("qS")).unwrap();
            writeln!(
                out,
                "(define-fun target_stays () Bool (and {} (< {r2} {r0})\n  {}))",
                and(silent),
                bind("qT", "pS_stay", &t, &s3)
            )
            .unwrap();
            goal.push("target_stays".into());
        }
    }
    side_conds.push(or(goal));
    writeln!(out, "(define-fun goal () Bool {})", and(side_conds)).unwrap();
    writeln!(out, "(assert (not goal))").unwrap();
    writeln!(out, "(check-sat)").unwrap();
    Ok(out)
}

/// Writes `<case>.base.smt2` and `<case>.ind.smt2` into `dir`.
pub fn write_queries(dir: &Path, case: &str, q: &QueryCase, w: &Witness) -> Result<(PathBuf, PathBuf), SmtError> {
    let sk = SkolemMap::from_witness(w)?;
    let base = emit_base_query(q, w)?;
    let ind = emit_inductive_query(q, w, &sk)?;
    let io = |e: io::Error| SmtError::Unsupported {
        side: Side::T,
        label: dir.display().to_string(),
        what: format!("writing queries ({e})"),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let bp = dir.join(format!("{case}.base.smt2"));
    let ip = dir.join(format!("{case}.ind.smt2"));
    fs::write(&bp, base).map_err(io)?;
    fs::write(&ip, ind).map_err(io)?;
    Ok((bp, ip))
}

#[cfg(test)]
mod tests {
    use std::process::Command;

    use super::*;
    use crate::fixtures::fixture;
    use crate::optimizer::TransformKind;
    use crate::witness::parse_formula;

    fn z3(query: &str) -> Option<String> {
        let dir = tempfile::tempdir().ok()?;
        let f = dir.path().join("q.smt2");
        fs::write(&f, query).ok()?;
        let out = Command::new("z3").arg("-T:60").arg(&f).output().ok()?;
        Some(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    fn folding_queries(w: Option<Witness>) -> (String, String) {
        let fx = fixture(TransformKind::ConstantFolding, 4);
        let r = fx.transform().unwrap();
        let w = w.unwrap_or_else(|| r.witness.clone().unwrap());
        let q = QueryCase {
            automaton: &fx.property.automata[0],
            source: &r.source,
            target: &r.target,
            model: &fx.property.model,
            buffer_bound: 2,
            logic: DEFAULT_LOGIC,
        };
        let sk = SkolemMap::from_witness(&w).unwrap();
        (emit_base_query(&q, &w).unwrap(), emit_inductive_query(&q, &w, &sk).unwrap())
    }

    #[test]
    fn emission_is_deterministic() {
        assert_eq!(folding_queries(None), folding_queries(None));
        let (b, i) = folding_queries(None);
        assert!(b.contains("(set-logic UFDTLIA)") && b.ends_with("(check-sat)\n"));
        assert!(i.contains("(assert (not goal))"));
    }

    #[test]
    fn skolems_must_not_name_existentials() {
        let mut w = Witness::new("p", parse_formula("t = s").unwrap()).with_default_skolems();
        w.skolems.push(("sPrime".into(), "pS".into()));
        assert!(matches!(SkolemMap::from_witness(&w), Err(SmtError::SkolemExistential { .. })));
        let bare = Witness::new("p", parse_formula("t = s").unwrap());
        assert!(matches!(SkolemMap::from_witness(&bare), Err(SmtError::MissingSkolem(_))));
    }

    #[test]
    fn folding_queries_are_unsat() {
        let (b, i) = folding_queries(None);
        let Some(rb) = z3(&b) else { return };
        assert_eq!(rb, "unsat", "{b}");
        assert_eq!(z3(&i).unwrap(), "unsat", "{i}");
    }

    #[test]
    fn bare_state_equality_is_not_inductive() {
        let w = Witness::new("fme", parse_formula("qT = qS && t = s").unwrap()).with_default_skolems();
        let (b, i) = folding_queries(Some(w));
        let Some(rb) = z3(&b) else { return };
        assert_eq!(rb, "unsat");
        assert_eq!(z3(&i).unwrap(), "sat");
    }
}
