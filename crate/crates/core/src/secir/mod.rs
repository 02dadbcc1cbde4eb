//! SecIR: a small labeled imperative language over bounded integers, its
//! transition-system semantics under an attack model, and lasso enumeration.

pub mod ast;
mod lasso;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use ast::{BinOp, Expr, Instr, ProgramAst};
pub use lasso::{enumerate_lassos, trace_of, LassoExecution, LassoSet, Step};

use crate::lex::SyntaxError;

/// Reserved name of the terminal location.
pub const END: &str = "End";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Secret,
    Public,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Secret => "secret",
            Channel::Public => "public",
        })
    }
}

/// Extended observations produced by non-I/O attack-model flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ext {
    /// Array cells touched by one instruction, in evaluation order.
    Mem(Vec<(Arc<str>, i64)>),
    Branch(bool),
    /// Memory exposed on the first visit to `End`.
    Final(Vec<(Arc<str>, i64)>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    Eps,
    Input { chan: Channel, val: i64 },
    Output { chan: Channel, val: i64 },
    Ext(Ext),
    Bot,
}

impl Event {
    pub fn is_eps(&self) -> bool {
        matches!(self, Event::Eps)
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Event::Input { .. })
    }

    pub fn is_output(&self) -> bool {
        matches!(self, Event::Output { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Event::Eps => "eps",
            Event::Input { .. } => "input",
            Event::Output { .. } => "output",
            Event::Ext(_) => "ext",
            Event::Bot => "bot",
        }
    }

    pub fn channel(&self) -> Option<Channel> {
        match self {
            Event::Input { chan, .. } | Event::Output { chan, .. } => Some(*chan),
            _ => None,
        }
    }

    /// Numeric payload: the I/O value, the branch outcome, or the single
    /// index of a one-cell memory access.
    pub fn value(&self) -> Option<i64> {
        match self {
            Event::Input { val, .. } | Event::Output { val, .. } => Some(*val),
            Event::Ext(Ext::Branch(b)) => Some(*b as i64),
            Event::Ext(Ext::Mem(acc)) if acc.len() == 1 => Some(acc[0].1),
            _ => None,
        }
    }

    /// Value of `name` in a final-memory exposure.
    pub fn exposed(&self, name: &str) -> Option<i64> {
        match self {
            Event::Ext(Ext::Final(vals)) => {
                vals.iter().find(|(n, _)| &**n == name).map(|(_, v)| *v)
            }
            _ => None,
        }
    }
}

fn write_pairs(f: &mut fmt::Formatter<'_>, xs: &[(Arc<str>, i64)], sep: &str) -> fmt::Result {
    for (n, (a, v)) in xs.iter().enumerate() {
        if n > 0 {
            write!(f, ",")?;
        }
        write!(f, "{a}{sep}{v}")?;
    }
    Ok(())
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Eps => write!(f, "eps"),
            Event::Bot => write!(f, "bot"),
            Event::Input { chan, val } => write!(f, "in({chan},{val})"),
            Event::Output { chan, val } => write!(f, "out({chan},{val})"),
            Event::Ext(Ext::Branch(b)) => write!(f, "br({})", *b as i64),
            Event::Ext(Ext::Mem(acc)) => {
                write!(f, "mem(")?;
                for (n, (a, i)) in acc.iter().enumerate() {
                    if n > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{a},{i}")?;
                }
                write!(f, ")")
            }
            Event::Ext(Ext::Final(vals)) => {
                write!(f, "fin(")?;
                write_pairs(f, vals, "=")?;
                write!(f, ")")
            }
        }
    }
}

impl Serialize for Event {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct AttackModel {
    pub name: String,
    pub io: bool,
    pub mem_access: bool,
    pub branch: bool,
    pub final_memory: bool,
    /// Names exposed at termination; `None` exposes every cell.
    pub final_vars: Option<Vec<String>>,
}

impl AttackModel {
    pub const NAMES: &'static [&'static str] = &["io", "mem", "branch", "ct", "final-memory"];

    fn flags(name: &str, mem_access: bool, branch: bool, final_memory: bool) -> Self {
        AttackModel {
            name: name.to_string(),
            io: true,
            mem_access,
            branch,
            final_memory,
            final_vars: None,
        }
    }

    pub fn io() -> Self {
        Self::flags("io", false, false, false)
    }

    pub fn mem() -> Self {
        Self::flags("mem", true, false, false)
    }

    pub fn branch() -> Self {
        Self::flags("branch", false, true, false)
    }

    pub fn ct() -> Self {
        Self::flags("ct", true, true, false)
    }

    pub fn final_memory() -> Self {
        Self::flags("final-memory", false, false, true)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "io" => Some(Self::io()),
            "mem" => Some(Self::mem()),
            "branch" => Some(Self::branch()),
            "ct" => Some(Self::ct()),
            "final-memory" => Some(Self::final_memory()),
            _ => None,
        }
    }

    pub fn with_final_vars(mut self, vars: &[&str]) -> Self {
        self.final_vars = Some(vars.iter().map(|v| v.to_string()).collect());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("label `{label}`: undeclared identifier `{name}`")]
    Undeclared { label: String, name: String },
    #[error("label `{label}`: `{name}` is an array, not a scalar (or vice versa)")]
    WrongKind { label: String, name: String },
    #[error("duplicate declaration of `{0}`")]
    DuplicateDecl(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("label `End` is reserved")]
    ReservedLabel,
    #[error("label `{at}`: jump to undefined label `{label}`")]
    UndefinedLabel { at: String, label: String },
    #[error("label `{0}` is unreachable from the entry")]
    Unreachable(String),
    #[error("label `{0}`: block may contain at most one input/output and no control flow")]
    BadBlock(String),
    #[error("cycle of silent instructions under attack model `{model}`: {cycle}")]
    SilentCycle { model: String, cycle: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum RExpr {
    Lit(i64),
    Cell(usize),
    Elem(usize, Box<RExpr>),
    Not(Box<RExpr>),
    Neg(Box<RExpr>),
    Bin(BinOp, Box<RExpr>, Box<RExpr>),
    Cond(Box<RExpr>, Box<RExpr>, Box<RExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum RInstr {
    Assign(usize, RExpr),
    Store(usize, RExpr, RExpr),
    Input(usize, Channel),
    Output(Channel, RExpr),
    Skip,
    Halt,
    Goto(usize),
    Branch(RExpr, usize, usize),
    Block(Vec<RInstr>),
    Choice(Vec<Vec<RInstr>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayInfo {
    pub name: Arc<str>,
    pub base: usize,
    pub len: usize,
}

/// A validated program with names resolved to cell and location indices.
/// Locations are label positions; `labels.len()` is `End`.
#[derive(Debug, Clone)]
pub struct Program {
    ast: ProgramAst,
    pub name: String,
    pub domain: i64,
    pub cell_names: Vec<Arc<str>>,
    scalars: HashMap<String, usize>,
    pub arrays: Vec<ArrayInfo>,
    array_ix: HashMap<String, usize>,
    pub labels: Vec<String>,
    code: Vec<RInstr>,
    exposed_all: Vec<usize>,
}

/// A program configuration: memory, location, and whether final memory
/// has already been exposed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Config {
    pub alpha: Vec<i64>,
    pub loc: usize,
    pub exposed: bool,
}

pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    Program::from_ast(ast::parse_ast(text)?)
}

pub fn initial_config(p: &Program) -> Config {
    p.initial_config()
}

pub fn step(p: &Program, m: &AttackModel, c: &Config) -> Vec<(Event, Config)> {
    p.step(m, c)
}

impl Program {
    pub fn from_ast(ast: ProgramAst) -> Result<Program, ProgramError> {
        let mut cell_names: Vec<Arc<str>> = Vec::new();
        let mut scalars = HashMap::new();
        let mut seen = HashSet::new();
        for v in &ast.vars {
            if !seen.insert(v.clone()) {
                return Err(ProgramError::DuplicateDecl(v.clone()));
            }
            scalars.insert(v.clone(), cell_names.len());
            cell_names.push(Arc::from(v.as_str()));
        }
        let mut arrays = Vec::new();
        let mut array_ix = HashMap::new();
        for (a, n) in &ast.arrays {
            if !seen.insert(a.clone()) {
                return Err(ProgramError::DuplicateDecl(a.clone()));
            }
            array_ix.insert(a.clone(), arrays.len());
            arrays.push(ArrayInfo {
                name: Arc::from(a.as_str()),
                base: cell_names.len(),
                len: *n,
            });
            for i in 0..*n {
                cell_names.push(Arc::from(format!("{a}[{i}]").as_str()));
            }
        }
        let mut labels = Vec::new();
        let mut label_ix = HashMap::new();
        for (l, _) in &ast.body {
            if l == END {
                return Err(ProgramError::ReservedLabel);
            }
            if label_ix.insert(l.clone(), labels.len()).is_some() {
                return Err(ProgramError::DuplicateLabel(l.clone()));
            }
            labels.push(l.clone());
        }
        label_ix.insert(END.to_string(), labels.len());

        let mut prog = Program {
            name: ast.name.clone(),
            domain: ast.domain,
            exposed_all: (0..cell_names.len()).collect(),
            cell_names,
            scalars,
            arrays,
            array_ix,
            labels,
            code: Vec::new(),
            ast: ProgramAst {
                body: Vec::new(),
                ..ast.clone()
            },
        };
        let mut code = Vec::new();
        for (idx, (l, ins)) in ast.body.iter().enumerate() {
            let r = Resolver {
                p: &prog,
                labels: &label_ix,
                at: l,
            };
            let ri = r.instr(ins, true)?;
            if let Instr::Block(xs) = ins {
                r.check_block(xs)?;
            }
            if let Instr::Choice(alts) = ins {
                for alt in alts {
                    r.check_block(alt)?;
                }
            }
            let _ = idx;
            code.push(ri);
        }
        prog.code = code;
        prog.ast.body = ast.body;
        prog.check_reachable()?;
        prog.check_silent_cycles(&AttackModel::io())?;
        Ok(prog)
    }

    pub fn ast(&self) -> &ProgramAst {
        &self.ast
    }

    pub(crate) fn code(&self) -> &[RInstr] {
        &self.code
    }

    pub fn end(&self) -> usize {
        self.labels.len()
    }

    pub fn entry(&self) -> usize {
        0
    }

    pub fn num_cells(&self) -> usize {
        self.cell_names.len()
    }

    pub fn loc_name(&self, loc: usize) -> &str {
        self.labels.get(loc).map(|s| s.as_str()).unwrap_or(END)
    }

    pub fn loc_index(&self, name: &str) -> Option<usize> {
        if name == END {
            return Some(self.end());
        }
        self.labels.iter().position(|l| l == name)
    }

    pub fn scalar(&self, name: &str) -> Option<usize> {
        self.scalars.get(name).copied()
    }

    pub fn array(&self, name: &str) -> Option<&ArrayInfo> {
        self.array_ix.get(name).map(|&i| &self.arrays[i])
    }

    /// Cell index of a scalar, or of `arr[i]` written literally.
    pub fn cell_index(&self, name: &str) -> Option<usize> {
        self.cell_names.iter().position(|n| &**n == name)
    }

    pub fn scalar_names(&self) -> impl Iterator<Item = &str> {
        self.ast.vars.iter().map(|s| s.as_str())
    }

    pub fn initial_config(&self) -> Config {
        Config {
            alpha: vec![0; self.num_cells()],
            loc: if self.labels.is_empty() { self.end() } else { 0 },
            exposed: false,
        }
    }

    /// Cells exposed at termination under `m`, in declaration order.
    pub fn exposed_cells(&self, m: &AttackModel) -> Vec<usize> {
        match &m.final_vars {
            None => self.exposed_all.clone(),
            Some(vs) => {
                let mut out = Vec::new();
                for v in vs {
                    if let Some(i) = self.scalar(v) {
                        out.push(i);
                    } else if let Some(a) = self.array(v) {
                        out.extend(a.base..a.base + a.len);
                    } else if let Some(i) = self.cell_index(v) {
                        out.push(i);
                    }
                }
                out
            }
        }
    }

    fn successors_of(&self, loc: usize) -> Vec<usize> {
        match &self.code[loc] {
            RInstr::Goto(l) => vec![*l],
            RInstr::Branch(_, a, b) => vec![*a, *b],
            RInstr::Halt => vec![self.end()],
            _ => vec![loc + 1],
        }
    }

    fn check_reachable(&self) -> Result<(), ProgramError> {
        if self.labels.is_empty() {
            return Ok(());
        }
        let mut seen = vec![false; self.end() + 1];
        let mut work = vec![0usize];
        seen[0] = true;
        while let Some(l) = work.pop() {
            if l == self.end() {
                continue;
            }
            for s in self.successors_of(l) {
                if !seen[s] {
                    seen[s] = true;
                    work.push(s);
                }
            }
        }
        match seen[..self.end()].iter().position(|s| !s) {
            Some(i) => Err(ProgramError::Unreachable(self.labels[i].clone())),
            None => Ok(()),
        }
    }

    /// Whether the instruction at `loc` can take an ε-labeled step under `m`.
    pub fn can_be_silent(&self, m: &AttackModel, loc: usize) -> bool {
        if loc >= self.end() {
            return false;
        }
        fn seq_silent(m: &AttackModel, xs: &[RInstr]) -> bool {
            let mut reads = false;
            for x in xs {
                match x {
                    RInstr::Input(..) => return false,
                    RInstr::Output(_, e) => {
                        if m.io {
                            return false;
                        }
                        reads |= e.reads_array();
                    }
                    RInstr::Assign(_, e) => reads |= e.reads_array(),
                    RInstr::Store(..) => reads = true,
                    _ => {}
                }
            }
            !(m.mem_access && reads)
        }
        match &self.code[loc] {
            RInstr::Branch(c, _, _) => !(m.branch || (m.mem_access && c.reads_array())),
            RInstr::Choice(alts) => alts.iter().any(|a| seq_silent(m, a)),
            RInstr::Block(xs) => seq_silent(m, xs),
            other => seq_silent(m, std::slice::from_ref(other)),
        }
    }

    /// Rejects programs with a cycle of possibly-silent instructions under `m`.
    pub fn check_silent_cycles(&self, m: &AttackModel) -> Result<(), ProgramError> {
        let n = self.end();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut color = vec![0u8; n];
        for start in 0..n {
            if color[start] != 0 || !self.can_be_silent(m, start) {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
            color[start] = 1;
            while let Some(&mut (l, ref mut k)) = stack.last_mut() {
                let succ = self.successors_of(l);
                if *k < succ.len() {
                    let s = succ[*k];
                    *k += 1;
                    if s >= n || !self.can_be_silent(m, s) {
                        continue;
                    }
                    if color[s] == 1 {
                        let from = stack.iter().position(|(x, _)| *x == s).unwrap_or(0);
                        let cycle: Vec<&str> =
                            stack[from..].iter().map(|(x, _)| self.loc_name(*x)).collect();
                        return Err(ProgramError::SilentCycle {
                            model: m.name.clone(),
                            cycle: cycle.join(" -> "),
                        });
                    }
                    if color[s] == 0 {
                        color[s] = 1;
                        stack.push((s, 0));
                    }
                } else {
                    color[l] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    /// True when some instruction can take a silent step under `m`.
    pub fn has_silent_steps(&self, m: &AttackModel) -> bool {
        (0..self.end()).any(|l| self.can_be_silent(m, l))
    }

    fn reduce(&self, v: i64) -> i64 {
        v.rem_euclid(self.domain)
    }

    fn truthy(&self, v: i64) -> bool {
        self.reduce(v) != 0
    }

    fn eval(&self, e: &RExpr, alpha: &[i64], acc: &mut Vec<(Arc<str>, i64)>) -> i64 {
        match e {
            RExpr::Lit(n) => *n,
            RExpr::Cell(c) => alpha[*c],
            RExpr::Elem(a, i) => {
                let i = self.eval(i, alpha, acc);
                let arr = &self.arrays[*a];
                let ix = i.rem_euclid(arr.len as i64);
                acc.push((arr.name.clone(), ix));
                alpha[arr.base + ix as usize]
            }
            RExpr::Not(e) => (!self.truthy(self.eval(e, alpha, acc))) as i64,
            RExpr::Neg(e) => self.eval(e, alpha, acc).wrapping_neg(),
            RExpr::Bin(op, a, b) => {
                let a = self.eval(a, alpha, acc);
                let b = self.eval(b, alpha, acc);
                op.apply(a, b, self.domain)
            }
            RExpr::Cond(c, a, b) => {
                if self.truthy(self.eval(c, alpha, acc)) {
                    self.eval(a, alpha, acc)
                } else {
                    self.eval(b, alpha, acc)
                }
            }
        }
    }

    /// Evaluates a surface expression against a memory, as the program would.
    pub fn eval_expr(&self, e: &Expr, alpha: &[i64]) -> Option<i64> {
        let r = Resolver {
            p: self,
            labels: &HashMap::new(),
            at: "",
        }
        .expr(e)
        .ok()?;
        Some(self.eval(&r, alpha, &mut Vec::new()))
    }

    /// Runs a straight-line sequence; inputs fork one branch per value.
    fn exec_seq(&self, xs: &[RInstr], run: SeqRun, out: &mut Vec<SeqRun>) {
        let Some((first, rest)) = xs.split_first() else {
            out.push(run);
            return;
        };
        let mut run = run;
        match first {
            RInstr::Input(c, chan) => {
                for v in 0..self.domain {
                    let mut r = run.clone();
                    r.alpha[*c] = v;
                    r.io = Some(Event::Input { chan: *chan, val: v });
                    self.exec_seq(rest, r, out);
                }
                return;
            }
            RInstr::Assign(c, e) => {
                let v = self.eval(e, &run.alpha, &mut run.acc);
                run.alpha[*c] = self.reduce(v);
            }
            RInstr::Store(a, i, e) => {
                let i = self.eval(i, &run.alpha, &mut run.acc);
                let v = self.eval(e, &run.alpha, &mut run.acc);
                let arr = &self.arrays[*a];
                let ix = i.rem_euclid(arr.len as i64);
                run.acc.push((arr.name.clone(), ix));
                run.alpha[arr.base + ix as usize] = self.reduce(v);
            }
            RInstr::Output(chan, e) => {
                let v = self.eval(e, &run.alpha, &mut run.acc);
                run.io = Some(Event::Output {
                    chan: *chan,
                    val: self.reduce(v),
                });
            }
            _ => {}
        }
        self.exec_seq(rest, run, out);
    }

    fn seq_event(&self, m: &AttackModel, run: &SeqRun) -> Event {
        match &run.io {
            Some(e @ Event::Input { .. }) => e.clone(),
            Some(e @ Event::Output { .. }) if m.io => e.clone(),
            _ if m.mem_access && !run.acc.is_empty() => Event::Ext(Ext::Mem(run.acc.clone())),
            _ => Event::Eps,
        }
    }

    /// All successors of `c` under `m`; never empty.
    pub fn step(&self, m: &AttackModel, c: &Config) -> Vec<(Event, Config)> {
        if c.loc >= self.end() {
            if m.final_memory && !c.exposed {
                let vals = self
                    .exposed_cells(m)
                    .into_iter()
                    .map(|i| (self.cell_names[i].clone(), c.alpha[i]))
                    .collect();
                let mut next = c.clone();
                next.exposed = true;
                return vec![(Event::Ext(Ext::Final(vals)), next)];
            }
            return vec![(Event::Bot, c.clone())];
        }
        let goto = |alpha: Vec<i64>, loc: usize| Config {
            alpha,
            loc,
            exposed: c.exposed,
        };
        match &self.code[c.loc] {
            RInstr::Goto(l) => vec![(Event::Eps, goto(c.alpha.clone(), *l))],
            RInstr::Halt => vec![(Event::Eps, goto(c.alpha.clone(), self.end()))],
            RInstr::Skip => vec![(Event::Eps, goto(c.alpha.clone(), c.loc + 1))],
            RInstr::Branch(cond, a, b) => {
                let mut acc = Vec::new();
                let taken = self.truthy(self.eval(cond, &c.alpha, &mut acc));
                let ev = if m.branch {
                    Event::Ext(Ext::Branch(taken))
                } else if m.mem_access && !acc.is_empty() {
                    Event::Ext(Ext::Mem(acc))
                } else {
                    Event::Eps
                };
                vec![(ev, goto(c.alpha.clone(), if taken { *a } else { *b }))]
            }
            RInstr::Choice(alts) => {
                let mut out: Vec<(Event, Config)> = Vec::new();
                for alt in alts {
                    let mut runs = Vec::new();
                    self.exec_seq(alt, SeqRun::new(&c.alpha), &mut runs);
                    for r in runs {
                        let item = (self.seq_event(m, &r), goto(r.alpha, c.loc + 1));
                        if !out.contains(&item) {
                            out.push(item);
                        }
                    }
                }
                out
            }
            other => {
                let xs = match other {
                    RInstr::Block(xs) => xs.as_slice(),
                    single => std::slice::from_ref(single),
                };
                let mut runs = Vec::new();
                self.exec_seq(xs, SeqRun::new(&c.alpha), &mut runs);
                runs.into_iter()
                    .map(|r| (self.seq_event(m, &r), goto(r.alpha, c.loc + 1)))
                    .collect()
            }
        }
    }

    /// Memory rendered as `name=value` pairs, for reports.
    pub fn show_alpha(&self, alpha: &[i64]) -> String {
        let mut s = String::new();
        for (i, v) in alpha.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            s.push_str(&format!("{}={}", self.cell_names[i], v));
        }
        s
    }

    pub fn show_config(&self, c: &Config) -> String {
        let mark = if c.loc == self.end() && c.exposed { "'" } else { "" };
        format!("({}{}, {{{}}})", self.loc_name(c.loc), mark, self.show_alpha(&c.alpha))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

#[derive(Clone)]
struct SeqRun {
    alpha: Vec<i64>,
    io: Option<Event>,
    acc: Vec<(Arc<str>, i64)>,
}

impl SeqRun {
    fn new(alpha: &[i64]) -> Self {
        SeqRun {
            alpha: alpha.to_vec(),
            io: None,
            acc: Vec::new(),
        }
    }
}

impl RExpr {
    fn reads_array(&self) -> bool {
        match self {
            RExpr::Lit(_) | RExpr::Cell(_) => false,
            RExpr::Elem(..) => true,
            RExpr::Not(e) | RExpr::Neg(e) => e.reads_array(),
            RExpr::Bin(_, a, b) => a.reads_array() || b.reads_array(),
            RExpr::Cond(c, a, b) => c.reads_array() || a.reads_array() || b.reads_array(),
        }
    }
}

struct Resolver<'a> {
    p: &'a Program,
    labels: &'a HashMap<String, usize>,
    at: &'a str,
}

impl Resolver<'_> {
    fn undeclared(&self, name: &str) -> ProgramError {
        let kind_clash = self.p.scalar(name).is_some() || self.p.array(name).is_some();
        if kind_clash {
            ProgramError::WrongKind {
                label: self.at.to_string(),
                name: name.to_string(),
            }
        } else {
            ProgramError::Undeclared {
                label: self.at.to_string(),
                name: name.to_string(),
            }
        }
    }

    fn scalar(&self, name: &str) -> Result<usize, ProgramError> {
        self.p.scalar(name).ok_or_else(|| self.undeclared(name))
    }

    fn array(&self, name: &str) -> Result<usize, ProgramError> {
        self.p
            .array_ix
            .get(name)
            .copied()
            .ok_or_else(|| self.undeclared(name))
    }

    fn label(&self, name: &str) -> Result<usize, ProgramError> {
        self.labels
            .get(name)
            .copied()
            .ok_or_else(|| ProgramError::UndefinedLabel {
                at: self.at.to_string(),
                label: name.to_string(),
            })
    }

    fn expr(&self, e: &Expr) -> Result<RExpr, ProgramError> {
        let b = |e: &Expr| self.expr(e).map(Box::new);
        Ok(match e {
            Expr::Lit(n) => RExpr::Lit(*n),
            Expr::Var(v) => RExpr::Cell(self.scalar(v)?),
            Expr::Elem(a, i) => RExpr::Elem(self.array(a)?, b(i)?),
            Expr::Not(x) => RExpr::Not(b(x)?),
            Expr::Neg(x) => RExpr::Neg(b(x)?),
            Expr::Bin(op, x, y) => RExpr::Bin(*op, b(x)?, b(y)?),
            Expr::Cond(c, x, y) => RExpr::Cond(b(c)?, b(x)?, b(y)?),
        })
    }

    fn instr(&self, i: &Instr, top: bool) -> Result<RInstr, ProgramError> {
        let seq = |xs: &[Instr]| -> Result<Vec<RInstr>, ProgramError> {
            xs.iter().map(|x| self.instr(x, false)).collect()
        };
        Ok(match i {
            Instr::Assign(v, e) => RInstr::Assign(self.scalar(v)?, self.expr(e)?),
            Instr::Store(a, ix, e) => RInstr::Store(self.array(a)?, self.expr(ix)?, self.expr(e)?),
            Instr::Input(v, c) => RInstr::Input(self.scalar(v)?, *c),
            Instr::Output(c, e) => RInstr::Output(*c, self.expr(e)?),
            Instr::Skip => RInstr::Skip,
            Instr::Halt => RInstr::Halt,
            Instr::Goto(l) => RInstr::Goto(self.label(l)?),
            Instr::Branch(c, a, b) => RInstr::Branch(self.expr(c)?, self.label(a)?, self.label(b)?),
            Instr::Block(xs) if top => RInstr::Block(seq(xs)?),
            Instr::Choice(alts) if top => {
                RInstr::Choice(alts.iter().map(|a| seq(a)).collect::<Result<_, _>>()?)
            }
            _ => return Err(ProgramError::BadBlock(self.at.to_string())),
        })
    }

    fn check_block(&self, xs: &[Instr]) -> Result<(), ProgramError> {
        let io = xs
            .iter()
            .filter(|x| matches!(x, Instr::Input(..) | Instr::Output(..)))
            .count();
        let control = xs.iter().any(|x| {
            matches!(
                x,
                Instr::Halt | Instr::Goto(_) | Instr::Branch(..) | Instr::Block(_) | Instr::Choice(_)
            )
        });
        if io > 1 || control {
            return Err(ProgramError::BadBlock(self.at.to_string()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const FOLD_SRC: &str = "program fold domain 4\nvar x, y, z\n\
        L1: x := input(secret)\nL2: y := 42\nL3: z := y - 41\nL4: x := x * (z - 1)\n";

    #[test]
    fn parses_four_line_program() {
        let p = parse_program(FOLD_SRC).unwrap();
        assert_eq!(p.labels, vec!["L1", "L2", "L3", "L4"]);
        assert_eq!(p.scalar_names().collect::<Vec<_>>(), vec!["x", "y", "z"]);
        assert_eq!(p.loc_name(p.end()), "End");
        let again = parse_program(&p.to_string()).unwrap();
        assert_eq!(again.ast(), p.ast());
    }

    #[test]
    fn empty_body_is_single_end() {
        let p = parse_program("program e domain 2").unwrap();
        let c = p.initial_config();
        assert_eq!(c.loc, p.end());
        assert!(c.alpha.is_empty());
        assert_eq!(p.step(&AttackModel::io(), &c), vec![(Event::Bot, c.clone())]);
    }

    #[test]
    fn undefined_label_rejected() {
        let e = parse_program("program g domain 2\nL1: goto L9\n").unwrap_err();
        assert!(matches!(e, ProgramError::UndefinedLabel { .. }), "{e}");
    }

    #[test]
    fn other_validation_errors() {
        let e = parse_program("program g domain 2\nL1: x := 1\n").unwrap_err();
        assert!(matches!(e, ProgramError::Undeclared { .. }));
        let e = parse_program("program g domain 2\nL1: halt\nL2: skip\n").unwrap_err();
        assert_eq!(e, ProgramError::Unreachable("L2".into()));
        let e = parse_program("program g domain 2\nL1: goto L1\n").unwrap_err();
        assert!(matches!(e, ProgramError::SilentCycle { .. }));
        let e = parse_program("program g domain 2\nvar x\nL1: x := \n").unwrap_err();
        match e {
            ProgramError::Syntax(s) => assert_eq!(s.pos.line, 3),
            other => panic!("{other}"),
        }
        let e = parse_program("program g domain 2\nvar x\nL1: { output(public, 1); output(public, 2) }\n")
            .unwrap_err();
        assert!(matches!(e, ProgramError::BadBlock(_)));
    }

    #[test]
    fn initial_config_zeroes_arrays() {
        let p = parse_program("program a domain 3\nvar x\narray a[2]\nL1: a[1] := 2\n").unwrap();
        let c = p.initial_config();
        assert_eq!(c.alpha, vec![0, 0, 0]);
        assert_eq!(c.loc, 0);
        assert_eq!(&*p.cell_names[2], "a[1]");
    }

    #[test]
    fn input_step_forks_domain() {
        let p = parse_program(FOLD_SRC).unwrap();
        let succ = p.step(&AttackModel::io(), &p.initial_config());
        assert_eq!(succ.len(), 4);
        for (v, (ev, c)) in succ.iter().enumerate() {
            assert_eq!(*ev, Event::Input { chan: Channel::Secret, val: v as i64 });
            assert_eq!(c.loc, 1);
            assert_eq!(c.alpha[0], v as i64);
        }
    }

    #[test]
    fn end_exposes_once_then_bot() {
        let p = parse_program(FOLD_SRC).unwrap();
        let m = AttackModel::final_memory().with_final_vars(&["x", "y"]);
        let c = Config {
            alpha: vec![1, 2, 3],
            loc: p.end(),
            exposed: false,
        };
        let s = p.step(&m, &c);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0.to_string(), "fin(x=1,y=2)");
        let s2 = p.step(&m, &s[0].1);
        assert_eq!(s2, vec![(Event::Bot, s[0].1.clone())]);
    }

    #[test]
    fn literal_arithmetic_reduces_on_store() {
        let p = parse_program(FOLD_SRC).unwrap();
        let m = AttackModel::io();
        let mut c = p.step(&m, &p.initial_config())[3].1.clone();
        for _ in 0..3 {
            let s = p.step(&m, &c);
            assert_eq!(s.len(), 1);
            assert!(s[0].0.is_eps());
            c = s[0].1.clone();
        }
        // y = 42 mod 4, z = 1, x = 3 * 0
        assert_eq!(c.alpha, vec![0, 2, 1]);
        assert_eq!(c.loc, p.end());
    }

    #[test]
    fn attack_model_refines_labels() {
        let src = "program m domain 2\nvar a, j\narray arr[2]\n\
            L1: j := input(secret)\nL2: if (j == 1) goto L3 else goto L4\nL3: a := arr[j]\nL4: skip\n";
        let p = parse_program(src).unwrap();
        let plain = AttackModel::io();
        let rich = AttackModel::ct();
        let mut work = vec![p.initial_config()];
        let mut seen = HashSet::new();
        while let Some(c) = work.pop() {
            if !seen.insert(c.clone()) {
                continue;
            }
            let a = p.step(&plain, &c);
            let b = p.step(&rich, &c);
            assert_eq!(a.len(), b.len());
            for ((ea, ca), (eb, cb)) in a.iter().zip(&b) {
                assert_eq!(ca, cb);
                if !ea.is_eps() {
                    assert_eq!(ea, eb);
                }
                work.push(ca.clone());
            }
        }
        let at_l2 = Config {
            alpha: vec![0, 1, 0, 0],
            loc: 1,
            exposed: false,
        };
        assert_eq!(p.step(&rich, &at_l2)[0].0, Event::Ext(Ext::Branch(true)));
        let at_l3 = Config { loc: 2, ..at_l2 };
        assert_eq!(p.step(&rich, &at_l3)[0].0.to_string(), "mem(arr,1)");
    }

    #[test]
    fn choice_yields_each_alternative() {
        let src = "program c domain 4\nvar n, a\nL1: choose { n := n + 1; a := n } | { a := n; n := n + 1 }\nL2: output(public, a)\n";
        let p = parse_program(src).unwrap();
        let s = p.step(&AttackModel::io(), &p.initial_config());
        let mut vals: Vec<i64> = s.iter().map(|(_, c)| c.alpha[1]).collect();
        vals.sort();
        assert_eq!(vals, vec![0, 1]);
    }
}
