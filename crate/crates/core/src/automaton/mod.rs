//! Bundle Büchi automata over k-vectors of events, their text format, the
//! buffering construction and the automaton-program product.

mod buffer;
mod product;
pub mod search;

use std::fmt;

pub use buffer::{accepts, AState, Acceptor, Overflow};
pub use product::{find_accepting_lasso, joint_steps, ExploreError, ProductError, ProductLasso, ProductState, ProductSystem};

use crate::lex::{Cursor, SyntaxError, Tok};
use crate::secir::{Channel, Event, Ext};
use crate::traceops::EventClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtKind {
    Mem,
    Branch,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn test<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Numeric terms of guards; track indices are zero-based internally.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Lit(i64),
    Val(usize),
    /// Value of a variable in a final-memory exposure.
    Mem(usize, String),
}

impl Term {
    fn eval(&self, v: &[Event]) -> Option<i64> {
        match self {
            Term::Lit(n) => Some(*n),
            Term::Val(i) => v[*i].value(),
            Term::Mem(i, x) => v[*i].exposed(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Guard {
    True,
    False,
    Kind(usize, &'static str),
    Chan(usize, Channel),
    ExtIs(usize, ExtKind),
    Cmp(CmpOp, Term, Term),
    Agree(usize, usize, EventClass),
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum Payload<'a> {
    Num(i64),
    Ext(&'a Ext),
}

fn payload(e: &Event) -> Option<Payload<'_>> {
    match e {
        Event::Input { val, .. } | Event::Output { val, .. } => Some(Payload::Num(*val)),
        Event::Ext(x) => Some(Payload::Ext(x)),
        _ => None,
    }
}

impl Guard {
    pub fn and(a: Guard, b: Guard) -> Guard {
        Guard::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Guard, b: Guard) -> Guard {
        Guard::Or(Box::new(a), Box::new(b))
    }

    pub fn not(a: Guard) -> Guard {
        Guard::Not(Box::new(a))
    }

    pub fn eval(&self, v: &[Event]) -> bool {
        match self {
            Guard::True => true,
            Guard::False => false,
            Guard::Kind(i, k) => v[*i].kind_name() == *k,
            Guard::Chan(i, c) => v[*i].channel() == Some(*c),
            Guard::ExtIs(i, k) => matches!(
                (&v[*i], k),
                (Event::Ext(Ext::Mem(_)), ExtKind::Mem)
                    | (Event::Ext(Ext::Branch(_)), ExtKind::Branch)
                    | (Event::Ext(Ext::Final(_)), ExtKind::Final)
            ),
            Guard::Cmp(op @ (CmpOp::Eq | CmpOp::Ne), Term::Val(i), Term::Val(j)) => {
                match (payload(&v[*i]), payload(&v[*j])) {
                    (Some(a), Some(b)) => op.test(a, b),
                    _ => false,
                }
            }
            Guard::Cmp(op, a, b) => match (a.eval(v), b.eval(v)) {
                (Some(a), Some(b)) => op.test(a, b),
                _ => false,
            },
            Guard::Agree(i, j, g) => g.agree(&v[*i], &v[*j]),
            Guard::Not(g) => !g.eval(v),
            Guard::And(a, b) => a.eval(v) && b.eval(v),
            Guard::Or(a, b) => a.eval(v) || b.eval(v),
        }
    }

    fn max_track(&self) -> Option<usize> {
        let t = |t: &Term| match t {
            Term::Lit(_) => None,
            Term::Val(i) | Term::Mem(i, _) => Some(*i),
        };
        match self {
            Guard::True | Guard::False => None,
            Guard::Kind(i, _) | Guard::Chan(i, _) | Guard::ExtIs(i, _) => Some(*i),
            Guard::Cmp(_, a, b) => t(a).max(t(b)),
            Guard::Agree(i, j, _) => Some(*i.max(j)),
            Guard::Not(g) => g.max_track(),
            Guard::And(a, b) | Guard::Or(a, b) => a.max_track().max(b.max_track()),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Lit(n) => write!(f, "{n}"),
            Term::Val(i) => write!(f, "val({})", i + 1),
            Term::Mem(i, x) => write!(f, "mem({}, {x})", i + 1),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::True => write!(f, "true"),
            Guard::False => write!(f, "false"),
            Guard::Kind(i, k) => write!(f, "kind({})={k}", i + 1),
            Guard::Chan(i, c) => write!(f, "chan({})={c}", i + 1),
            Guard::ExtIs(i, k) => {
                let k = match k {
                    ExtKind::Mem => "mem",
                    ExtKind::Branch => "branch",
                    ExtKind::Final => "final",
                };
                write!(f, "ext({})={k}", i + 1)
            }
            Guard::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Guard::Agree(i, j, g) => write!(f, "agree({}, {}, {g})", i + 1, j + 1),
            Guard::Not(g) => write!(f, "!({g})"),
            Guard::And(a, b) => write!(f, "({a} && {b})"),
            Guard::Or(a, b) => write!(f, "({a} || {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub guard: Guard,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleAutomaton {
    pub name: String,
    pub k: usize,
    pub states: Vec<String>,
    pub initial: usize,
    pub accepting: Vec<bool>,
    pub trans: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AutomatonError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("automaton needs exactly one initial state, found {0}")]
    Initial(usize),
    #[error("guard refers to track {track} but the automaton has {k} tracks")]
    Arity { track: usize, k: usize },
}

impl BundleAutomaton {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting[q]
    }

    /// Successor states on a letter, sorted and without duplicates.
    pub fn successors(&self, q: usize, v: &[Event]) -> Vec<usize> {
        debug_assert_eq!(v.len(), self.k);
        let mut out: Vec<usize> = self
            .trans
            .iter()
            .filter(|t| t.from == q && t.guard.eval(v))
            .map(|t| t.to)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn validate(&self) -> Result<(), AutomatonError> {
        for t in &self.trans {
            if let Some(m) = t.guard.max_track() {
                if m >= self.k {
                    return Err(AutomatonError::Arity { track: m + 1, k: self.k });
                }
            }
        }
        Ok(())
    }

    /// Builder used by the property library.
    pub fn build(
        name: &str,
        k: usize,
        states: &[(&str, bool)],
        trans: &[(&str, Guard, &str)],
    ) -> BundleAutomaton {
        let names: Vec<String> = states.iter().map(|(s, _)| s.to_string()).collect();
        let ix = |s: &str| names.iter().position(|n| n == s).expect("known state");
        BundleAutomaton {
            name: name.to_string(),
            k,
            initial: 0,
            accepting: states.iter().map(|(_, a)| *a).collect(),
            trans: trans
                .iter()
                .map(|(a, g, b)| Transition {
                    from: ix(a),
                    guard: g.clone(),
                    to: ix(b),
                })
                .collect(),
            states: names,
        }
    }
}

impl fmt::Display for BundleAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "automaton {} tracks {}", self.name, self.k)?;
        for (i, s) in self.states.iter().enumerate() {
            write!(f, "state {s}")?;
            if i == self.initial {
                write!(f, " initial")?;
            }
            if self.accepting[i] {
                write!(f, " accepting")?;
            }
            writeln!(f)?;
        }
        for t in &self.trans {
            writeln!(
                f,
                "trans {} -> {} when {}",
                self.states[t.from], self.states[t.to], t.guard
            )?;
        }
        Ok(())
    }
}

pub fn parse_automaton(text: &str) -> Result<BundleAutomaton, AutomatonError> {
    let mut c = Cursor::new(text)?;
    c.expect_kw("automaton")?;
    let name = c.ident()?;
    c.expect_kw("tracks")?;
    let k = c.int()?;
    if k < 1 {
        return Err(c.error("track count must be positive").into());
    }
    let k = k as usize;
    let mut states: Vec<String> = Vec::new();
    let mut accepting = Vec::new();
    let mut initial = Vec::new();
    let mut raw_trans = Vec::new();
    while !c.at_end() {
        if c.eat_kw("state") {
            let s = c.ident()?;
            if states.contains(&s) {
                return Err(AutomatonError::DuplicateState(s));
            }
            let mut acc = false;
            loop {
                if c.eat_kw("initial") {
                    initial.push(states.len());
                } else if c.eat_kw("accepting") {
                    acc = true;
                } else {
                    break;
                }
            }
            states.push(s);
            accepting.push(acc);
        } else if c.eat_kw("trans") {
            let from = c.ident()?;
            c.expect_sym("->")?;
            let to = c.ident()?;
            c.expect_kw("when")?;
            let g = parse_guard(&mut c)?;
            raw_trans.push((from, g, to));
        } else {
            let msg = format!("expected `state` or `trans`, found {}", c.describe());
            return Err(c.error(msg).into());
        }
    }
    if initial.len() != 1 {
        return Err(AutomatonError::Initial(initial.len()));
    }
    let ix = |s: &str| {
        states
            .iter()
            .position(|n| n == s)
            .ok_or_else(|| AutomatonError::UnknownState(s.to_string()))
    };
    let mut trans = Vec::new();
    for (a, g, b) in raw_trans {
        trans.push(Transition {
            from: ix(&a)?,
            guard: g,
            to: ix(&b)?,
        });
    }
    let a = BundleAutomaton {
        name,
        k,
        initial: initial[0],
        accepting,
        trans,
        states,
    };
    a.validate()?;
    Ok(a)
}

pub fn parse_guard(c: &mut Cursor) -> Result<Guard, SyntaxError> {
    let mut g = guard_and(c)?;
    while c.eat_sym("||") {
        g = Guard::or(g, guard_and(c)?);
    }
    Ok(g)
}

fn guard_and(c: &mut Cursor) -> Result<Guard, SyntaxError> {
    let mut g = guard_unary(c)?;
    while c.eat_sym("&&") {
        g = Guard::and(g, guard_unary(c)?);
    }
    Ok(g)
}

fn track(c: &mut Cursor) -> Result<usize, SyntaxError> {
    let n = c.int()?;
    if n < 1 {
        return c.err("track indices start at 1");
    }
    Ok(n as usize - 1)
}

fn eq_or_ne(c: &mut Cursor) -> Result<bool, SyntaxError> {
    if c.eat_sym("=") || c.eat_sym("==") {
        Ok(true)
    } else if c.eat_sym("!=") {
        Ok(false)
    } else {
        c.err(format!("expected `=` or `!=`, found {}", c.describe()))
    }
}

fn term(c: &mut Cursor) -> Result<Term, SyntaxError> {
    if c.is_kw("val") {
        c.next();
        c.expect_sym("(")?;
        let i = track(c)?;
        c.expect_sym(")")?;
        return Ok(Term::Val(i));
    }
    if c.is_kw("mem") {
        c.next();
        c.expect_sym("(")?;
        let i = track(c)?;
        c.expect_sym(",")?;
        let mut x = c.ident()?;
        if c.eat_sym("[") {
            let n = c.int()?;
            c.expect_sym("]")?;
            x = format!("{x}[{n}]");
        }
        c.expect_sym(")")?;
        return Ok(Term::Mem(i, x));
    }
    match c.peek() {
        Some(Tok::Int(_)) | Some(Tok::Sym("-")) => Ok(Term::Lit(c.int()?)),
        _ => c.err(format!("expected guard term, found {}", c.describe())),
    }
}

pub fn parse_class(c: &mut Cursor) -> Result<EventClass, SyntaxError> {
    let mut name = c.ident()?;
    if c.is_sym("(") {
        c.next();
        let ch = c.ident()?;
        c.expect_sym(")")?;
        name = format!("{name}({ch})");
    }
    match EventClass::parse(&name) {
        Some(g) => Ok(g),
        None => c.err(format!("unknown event class `{name}`")),
    }
}

fn guard_unary(c: &mut Cursor) -> Result<Guard, SyntaxError> {
    if c.eat_sym("!") {
        return Ok(Guard::not(guard_unary(c)?));
    }
    if c.eat_sym("(") {
        let g = parse_guard(c)?;
        c.expect_sym(")")?;
        return Ok(g);
    }
    if c.eat_kw("true") {
        return Ok(Guard::True);
    }
    if c.eat_kw("false") {
        return Ok(Guard::False);
    }
    for head in ["kind", "chan", "ext"] {
        if c.is_kw(head) && matches!(c.peek_at(1), Some(Tok::Sym("("))) {
            c.next();
            c.expect_sym("(")?;
            let i = track(c)?;
            c.expect_sym(")")?;
            let positive = eq_or_ne(c)?;
            let what = c.ident()?;
            let g = match (head, what.as_str()) {
                ("kind", "input") => Guard::Kind(i, "input"),
                ("kind", "output") => Guard::Kind(i, "output"),
                ("kind", "ext") => Guard::Kind(i, "ext"),
                ("kind", "bot") => Guard::Kind(i, "bot"),
                ("kind", "eps") => Guard::Kind(i, "eps"),
                ("chan", "secret") => Guard::Chan(i, Channel::Secret),
                ("chan", "public") => Guard::Chan(i, Channel::Public),
                ("ext", "mem") => Guard::ExtIs(i, ExtKind::Mem),
                ("ext", "branch") => Guard::ExtIs(i, ExtKind::Branch),
                ("ext", "final") => Guard::ExtIs(i, ExtKind::Final),
                _ => return c.err(format!("`{what}` is not a valid {head}")),
            };
            return Ok(if positive { g } else { Guard::not(g) });
        }
    }
    if c.is_kw("agree") {
        c.next();
        c.expect_sym("(")?;
        let i = track(c)?;
        c.expect_sym(",")?;
        let j = track(c)?;
        c.expect_sym(",")?;
        let g = parse_class(c)?;
        c.expect_sym(")")?;
        return Ok(Guard::Agree(i, j, g));
    }
    let a = term(c)?;
    let op = [
        ("=", CmpOp::Eq),
        ("==", CmpOp::Eq),
        ("!=", CmpOp::Ne),
        ("<=", CmpOp::Le),
        (">=", CmpOp::Ge),
        ("<", CmpOp::Lt),
        (">", CmpOp::Gt),
    ]
    .into_iter()
    .find(|(s, _)| c.is_sym(s));
    match op {
        Some((s, op)) => {
            c.expect_sym(s)?;
            let b = term(c)?;
            Ok(Guard::Cmp(op, a, b))
        }
        None => c.err(format!(
            "non-boolean guard: term `{a}` must be compared, found {}",
            c.describe()
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const NI_TEXT: &str = "automaton ni tracks 2
state I initial
state S
state M
state F accepting
trans I -> M when agree(1, 2, low)
trans I -> S when !agree(1, 2, low)
trans M -> F when !agree(1, 2, low)
trans M -> M when agree(1, 2, low)
trans S -> S when true
trans F -> F when true
";

    fn out(v: i64) -> Event {
        Event::Output { chan: Channel::Public, val: v }
    }

    #[test]
    fn parses_four_state_automaton() {
        let a = parse_automaton(NI_TEXT).unwrap();
        assert_eq!(a.states.len(), 4);
        assert_eq!(a.accepting.iter().filter(|x| **x).count(), 1);
        assert!(a.is_accepting(a.state_index("F").unwrap()));
        assert_eq!(parse_automaton(&a.to_string()).unwrap(), a);
    }

    #[test]
    fn universal_acceptor_parses() {
        let a = parse_automaton("automaton all tracks 1\nstate q initial accepting\ntrans q -> q when true\n")
            .unwrap();
        assert_eq!(a.successors(0, &[Event::Bot]), vec![0]);
    }

    #[test]
    fn arity_and_name_errors() {
        let e = parse_automaton("automaton a tracks 2\nstate q initial\ntrans q -> q when kind(3)=bot\n")
            .unwrap_err();
        assert_eq!(e, AutomatonError::Arity { track: 3, k: 2 });
        let e = parse_automaton("automaton a tracks 1\nstate q initial\ntrans q -> r when true\n")
            .unwrap_err();
        assert_eq!(e, AutomatonError::UnknownState("r".into()));
        let e = parse_automaton("automaton a tracks 1\nstate q initial\ntrans q -> q when val(1)\n")
            .unwrap_err();
        assert!(e.to_string().contains("non-boolean"), "{e}");
    }

    #[test]
    fn guard_semantics() {
        let mut c = Cursor::new("val(1) = val(2) && kind(1)=output && chan(2)=public && val(1) < 3").unwrap();
        let g = parse_guard(&mut c).unwrap();
        assert!(g.eval(&[out(1), out(1)]));
        assert!(!g.eval(&[out(1), out(2)]));
        assert!(!g.eval(&[out(1), Event::Bot]));
        let mut c = Cursor::new("mem(1, x) != mem(2, x)").unwrap();
        let g = parse_guard(&mut c).unwrap();
        let fin = |v| Event::Ext(Ext::Final(vec![("x".into(), v)]));
        assert!(g.eval(&[fin(0), fin(1)]));
        assert!(!g.eval(&[fin(1), fin(1)]));
        assert!(!g.eval(&[fin(1), Event::Bot]));
    }
}
