//! Untyped parse trees of witness formulas and their concrete syntax.
//!
//! ```text
//! qT = qS && t = s && (T1.loc = L3 -> T1.y = 42)
//! alltracks(T.loc = L2 && T.alpha = S.alpha[a := arr[0]]) && Delta(qS, [mem(arr,0)], qT)
//! alltracks(L(S,T) in {(L1,L1), (L5,L2)} && eqon{x}(S,T))
//! alltracks(sigma{ L1: RegA = a; L2: RegA = a, spill[0] = b })
//! sumtracks(S.loc = L2 ? 1 : 0)
//! ```

use std::fmt;

use crate::lex::{Cursor, SyntaxError, Tok};
use crate::secir::ast::{self as sast, BinOp};
use crate::secir::{Channel, Event, Ext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    T,
    S,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::T => "T",
            Side::S => "S",
        })
    }
}

/// `T` / `S` alone refer to the current track; `T2` names track 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrackRef {
    pub side: Side,
    pub track: Option<usize>,
}

impl fmt::Display for TrackRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.track {
            Some(i) => write!(f, "{}{}", self.side, i + 1),
            None => write!(f, "{}", self.side),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Update {
    pub target: String,
    pub index: Option<sast::Expr>,
    pub value: sast::Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WBin {
    Arith(BinOp),
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
    Iff,
}

impl WBin {
    fn symbol(self) -> &'static str {
        match self {
            WBin::Arith(op) => op.symbol(),
            WBin::Eq => "=",
            WBin::Ne => "!=",
            WBin::Lt => "<",
            WBin::Le => "<=",
            WBin::Gt => ">",
            WBin::Ge => ">=",
            WBin::And => "&&",
            WBin::Or => "||",
            WBin::Implies => "->",
            WBin::Iff => "<->",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PExpr {
    Int(i64),
    Bool(bool),
    /// Label, automaton state, or `t` / `s`.
    Name(String),
    QT,
    QS,
    Loc(TrackRef),
    Var(TrackRef, String),
    Elem(TrackRef, String, Box<PExpr>),
    Alpha(TrackRef, Vec<Update>),
    Delta(Vec<Event>),
    EqOn(Vec<String>),
    Pairs(Vec<(String, String)>),
    Sigma(Vec<(String, Vec<(String, String)>)>),
    Synced(Side),
    Not(Box<PExpr>),
    Neg(Box<PExpr>),
    Bin(WBin, Box<PExpr>, Box<PExpr>),
    Ite(Box<PExpr>, Box<PExpr>, Box<PExpr>),
    AllTracks(Box<PExpr>),
    AnyTrack(Box<PExpr>),
    SumTracks(Box<PExpr>),
}

impl PExpr {
    pub fn bin(op: WBin, a: PExpr, b: PExpr) -> PExpr {
        PExpr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn and(a: PExpr, b: PExpr) -> PExpr {
        PExpr::bin(WBin::And, a, b)
    }

    pub fn or(a: PExpr, b: PExpr) -> PExpr {
        PExpr::bin(WBin::Or, a, b)
    }

    pub fn implies(a: PExpr, b: PExpr) -> PExpr {
        PExpr::bin(WBin::Implies, a, b)
    }

    pub fn eq(a: PExpr, b: PExpr) -> PExpr {
        PExpr::bin(WBin::Eq, a, b)
    }

    pub fn all(xs: Vec<PExpr>) -> PExpr {
        xs.into_iter()
            .reduce(PExpr::and)
            .unwrap_or(PExpr::Bool(true))
    }

    pub fn any(xs: Vec<PExpr>) -> PExpr {
        xs.into_iter()
            .reduce(PExpr::or)
            .unwrap_or(PExpr::Bool(false))
    }

    pub fn name(s: &str) -> PExpr {
        PExpr::Name(s.to_string())
    }

    pub fn loc_is(tr: TrackRef, label: &str) -> PExpr {
        PExpr::eq(PExpr::Loc(tr), PExpr::name(label))
    }

    pub fn var(tr: TrackRef, v: &str) -> PExpr {
        PExpr::Var(tr, v.to_string())
    }

    /// `qT = qS && t = s`
    pub fn state_equality() -> PExpr {
        PExpr::and(
            PExpr::eq(PExpr::QT, PExpr::QS),
            PExpr::eq(PExpr::name("t"), PExpr::name("s")),
        )
    }

    /// Drops top-level conjuncts for which `drop` holds.
    pub fn without_conjuncts(&self, drop: &dyn Fn(&PExpr) -> bool) -> PExpr {
        let mut parts = Vec::new();
        self.conjuncts(&mut parts);
        PExpr::all(parts.into_iter().filter(|p| !drop(p)).cloned().collect())
    }

    pub fn conjuncts<'a>(&'a self, out: &mut Vec<&'a PExpr>) {
        match self {
            PExpr::Bin(WBin::And, a, b) => {
                a.conjuncts(out);
                b.conjuncts(out);
            }
            other => out.push(other),
        }
    }
}

pub const T_CUR: TrackRef = TrackRef {
    side: Side::T,
    track: None,
};
pub const S_CUR: TrackRef = TrackRef {
    side: Side::S,
    track: None,
};

pub fn track(side: Side, i: usize) -> TrackRef {
    TrackRef {
        side,
        track: Some(i),
    }
}

// ---------------------------------------------------------------------------
// Printing

fn event_lit(e: &Event) -> String {
    match e {
        Event::Ext(Ext::Mem(acc)) => {
            let xs: Vec<String> = acc.iter().map(|(a, i)| format!("{a},{i}")).collect();
            format!("mem({})", xs.join(";"))
        }
        other => other.to_string(),
    }
}

impl fmt::Display for PExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn sub(f: &mut fmt::Formatter<'_>, e: &PExpr) -> fmt::Result {
            match e {
                PExpr::Bin(..) | PExpr::Ite(..) => write!(f, "({e})"),
                _ => write!(f, "{e}"),
            }
        }
        match self {
            PExpr::Int(n) if *n < 0 => write!(f, "(0 - {})", -n),
            PExpr::Int(n) => write!(f, "{n}"),
            PExpr::Bool(b) => write!(f, "{b}"),
            PExpr::Name(n) => write!(f, "{n}"),
            PExpr::QT => write!(f, "qT"),
            PExpr::QS => write!(f, "qS"),
            PExpr::Loc(t) => write!(f, "{t}.loc"),
            PExpr::Var(t, v) => write!(f, "{t}.{v}"),
            PExpr::Elem(t, a, i) => write!(f, "{t}.{a}[{i}]"),
            PExpr::Alpha(t, ups) => {
                write!(f, "{t}.alpha")?;
                if !ups.is_empty() {
                    let xs: Vec<String> = ups
                        .iter()
                        .map(|u| match &u.index {
                            Some(i) => format!("{}[{}] := {}", u.target, i, u.value),
                            None => format!("{} := {}", u.target, u.value),
                        })
                        .collect();
                    write!(f, "[{}]", xs.join(", "))?;
                }
                Ok(())
            }
            PExpr::Delta(letters) => {
                let xs: Vec<String> = letters.iter().map(event_lit).collect();
                write!(f, "Delta(qS, [{}], qT)", xs.join(", "))
            }
            PExpr::EqOn(names) => write!(f, "eqon{{{}}}(S,T)", names.join(", ")),
            PExpr::Pairs(ps) => {
                let xs: Vec<String> = ps.iter().map(|(a, b)| format!("({a},{b})")).collect();
                write!(f, "L(S,T) in {{{}}}", xs.join(", "))
            }
            PExpr::Sigma(rows) => {
                let xs: Vec<String> = rows
                    .iter()
                    .map(|(l, es)| {
                        let es: Vec<String> = es.iter().map(|(a, b)| format!("{a} = {b}")).collect();
                        format!("{l}: {}", es.join(", "))
                    })
                    .collect();
                write!(f, "sigma{{ {} }}", xs.join("; "))
            }
            PExpr::Synced(s) => write!(f, "synced({s})"),
            PExpr::Not(e) => {
                write!(f, "!")?;
                sub(f, e)
            }
            PExpr::Neg(e) => {
                write!(f, "-")?;
                sub(f, e)
            }
            PExpr::Bin(op, a, b) => {
                sub(f, a)?;
                write!(f, " {} ", op.symbol())?;
                sub(f, b)
            }
            PExpr::Ite(c, a, b) => {
                sub(f, c)?;
                write!(f, " ? ")?;
                sub(f, a)?;
                write!(f, " : ")?;
                sub(f, b)
            }
            PExpr::AllTracks(e) => write!(f, "alltracks({e})"),
            PExpr::AnyTrack(e) => write!(f, "anytrack({e})"),
            PExpr::SumTracks(e) => write!(f, "sumtracks({e})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

pub fn parse_formula(text: &str) -> Result<PExpr, SyntaxError> {
    let mut c = Cursor::new(text)?;
    let e = parse(&mut c)?;
    if !c.at_end() {
        return c.err(format!("unexpected {} after formula", c.describe()));
    }
    Ok(e)
}

pub fn parse(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let cond = parse_iff(c)?;
    if c.eat_sym("?") {
        let a = parse(c)?;
        c.expect_sym(":")?;
        let b = parse(c)?;
        return Ok(PExpr::Ite(Box::new(cond), Box::new(a), Box::new(b)));
    }
    Ok(cond)
}

fn parse_iff(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let mut e = parse_implies(c)?;
    while c.eat_sym("<->") {
        e = PExpr::bin(WBin::Iff, e, parse_implies(c)?);
    }
    Ok(e)
}

fn parse_implies(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let e = parse_or(c)?;
    if c.eat_sym("->") {
        return Ok(PExpr::implies(e, parse_implies(c)?));
    }
    Ok(e)
}

fn parse_or(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let mut e = parse_and(c)?;
    while c.eat_sym("||") {
        e = PExpr::or(e, parse_and(c)?);
    }
    Ok(e)
}

fn parse_and(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let mut e = parse_cmp(c)?;
    while c.eat_sym("&&") {
        e = PExpr::and(e, parse_cmp(c)?);
    }
    Ok(e)
}

fn parse_cmp(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let e = parse_add(c)?;
    let ops = [
        ("=", WBin::Eq),
        ("==", WBin::Eq),
        ("!=", WBin::Ne),
        ("<=", WBin::Le),
        (">=", WBin::Ge),
        ("<", WBin::Lt),
        (">", WBin::Gt),
    ];
    match ops.into_iter().find(|(s, _)| c.is_sym(s)) {
        Some((s, op)) => {
            c.expect_sym(s)?;
            Ok(PExpr::bin(op, e, parse_add(c)?))
        }
        None => Ok(e),
    }
}

fn parse_add(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let mut e = parse_mul(c)?;
    loop {
        let op = if c.eat_sym("+") {
            BinOp::Add
        } else if c.eat_sym("-") {
            BinOp::Sub
        } else {
            return Ok(e);
        };
        e = PExpr::bin(WBin::Arith(op), e, parse_mul(c)?);
    }
}

fn parse_mul(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    let mut e = parse_unary(c)?;
    loop {
        let op = if c.eat_sym("*") {
            BinOp::Mul
        } else if c.eat_sym("/") {
            BinOp::Div
        } else if c.eat_sym("%") {
            BinOp::Mod
        } else {
            return Ok(e);
        };
        e = PExpr::bin(WBin::Arith(op), e, parse_unary(c)?);
    }
}

fn parse_unary(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    if c.eat_sym("!") {
        return Ok(PExpr::Not(Box::new(parse_unary(c)?)));
    }
    if c.eat_sym("-") {
        return Ok(PExpr::Neg(Box::new(parse_unary(c)?)));
    }
    parse_primary(c)
}

fn track_ref(name: &str) -> Option<TrackRef> {
    let side = match name.chars().next()? {
        'T' => Side::T,
        'S' => Side::S,
        _ => return None,
    };
    let rest = &name[1..];
    if rest.is_empty() {
        return Some(TrackRef { side, track: None });
    }
    let n: usize = rest.parse().ok()?;
    (n >= 1).then_some(TrackRef {
        side,
        track: Some(n - 1),
    })
}

fn cell_name(c: &mut Cursor) -> Result<String, SyntaxError> {
    let mut n = c.ident()?;
    if c.eat_sym("[") {
        let i = c.int()?;
        c.expect_sym("]")?;
        n = format!("{n}[{i}]");
    }
    Ok(n)
}

fn expect_s_t(c: &mut Cursor) -> Result<(), SyntaxError> {
    c.expect_sym("(")?;
    c.expect_kw("S")?;
    c.expect_sym(",")?;
    c.expect_kw("T")?;
    c.expect_sym(")")
}

fn parse_event(c: &mut Cursor) -> Result<Event, SyntaxError> {
    let head = c.ident()?;
    let chan = |c: &mut Cursor| -> Result<Channel, SyntaxError> {
        match c.ident()?.as_str() {
            "secret" => Ok(Channel::Secret),
            "public" => Ok(Channel::Public),
            other => c.err(format!("unknown channel `{other}`")),
        }
    };
    Ok(match head.as_str() {
        "eps" => Event::Eps,
        "bot" => Event::Bot,
        "in" | "out" => {
            c.expect_sym("(")?;
            let ch = chan(c)?;
            c.expect_sym(",")?;
            let val = c.int()?;
            c.expect_sym(")")?;
            if head == "in" {
                Event::Input { chan: ch, val }
            } else {
                Event::Output { chan: ch, val }
            }
        }
        "mem" => {
            c.expect_sym("(")?;
            let mut acc = Vec::new();
            loop {
                let a = c.ident()?;
                c.expect_sym(",")?;
                let i = c.int()?;
                acc.push((a.as_str().into(), i));
                if !c.eat_sym(";") {
                    break;
                }
            }
            c.expect_sym(")")?;
            Event::Ext(Ext::Mem(acc))
        }
        "br" => {
            c.expect_sym("(")?;
            let b = c.int()?;
            c.expect_sym(")")?;
            Event::Ext(Ext::Branch(b != 0))
        }
        other => return c.err(format!("unknown event literal `{other}`")),
    })
}

fn parse_primary(c: &mut Cursor) -> Result<PExpr, SyntaxError> {
    if c.eat_sym("(") {
        let e = parse(c)?;
        c.expect_sym(")")?;
        return Ok(e);
    }
    let tok = c.peek().cloned();
    let name = match tok {
        Some(Tok::Int(n)) => {
            c.next();
            return Ok(PExpr::Int(n));
        }
        Some(Tok::Ident(n)) => n,
        _ => return c.err(format!("expected formula, found {}", c.describe())),
    };
    let call = matches!(c.peek_at(1), Some(Tok::Sym("(")));
    let brace = matches!(c.peek_at(1), Some(Tok::Sym("{")));
    let dot = matches!(c.peek_at(1), Some(Tok::Sym(".")));
    c.next();
    match name.as_str() {
        "true" => return Ok(PExpr::Bool(true)),
        "false" => return Ok(PExpr::Bool(false)),
        "qT" => return Ok(PExpr::QT),
        "qS" => return Ok(PExpr::QS),
        "alltracks" | "anytrack" | "sumtracks" if call => {
            c.expect_sym("(")?;
            let e = Box::new(parse(c)?);
            c.expect_sym(")")?;
            return Ok(match name.as_str() {
                "alltracks" => PExpr::AllTracks(e),
                "anytrack" => PExpr::AnyTrack(e),
                _ => PExpr::SumTracks(e),
            });
        }
        "synced" if call => {
            c.expect_sym("(")?;
            let side = match c.ident()?.as_str() {
                "T" => Side::T,
                "S" => Side::S,
                other => return c.err(format!("expected T or S, found `{other}`")),
            };
            c.expect_sym(")")?;
            return Ok(PExpr::Synced(side));
        }
        "Delta" if call => {
            c.expect_sym("(")?;
            c.expect_kw("qS")?;
            c.expect_sym(",")?;
            c.expect_sym("[")?;
            let mut letters = vec![parse_event(c)?];
            while c.eat_sym(",") {
                letters.push(parse_event(c)?);
            }
            c.expect_sym("]")?;
            c.expect_sym(",")?;
            c.expect_kw("qT")?;
            c.expect_sym(")")?;
            return Ok(PExpr::Delta(letters));
        }
        "eqon" if brace => {
            c.expect_sym("{")?;
            let mut names = Vec::new();
            if !c.is_sym("}") {
                loop {
                    names.push(cell_name(c)?);
                    if !c.eat_sym(",") {
                        break;
                    }
                }
            }
            c.expect_sym("}")?;
            expect_s_t(c)?;
            return Ok(PExpr::EqOn(names));
        }
        "L" if call => {
            expect_s_t(c)?;
            c.expect_kw("in")?;
            c.expect_sym("{")?;
            let mut pairs = Vec::new();
            if !c.is_sym("}") {
                loop {
                    c.expect_sym("(")?;
                    let a = c.ident()?;
                    c.expect_sym(",")?;
                    let b = c.ident()?;
                    c.expect_sym(")")?;
                    pairs.push((a, b));
                    if !c.eat_sym(",") {
                        break;
                    }
                }
            }
            c.expect_sym("}")?;
            return Ok(PExpr::Pairs(pairs));
        }
        "sigma" if brace => {
            c.expect_sym("{")?;
            let mut rows = Vec::new();
            while !c.eat_sym("}") {
                let l = c.ident()?;
                c.expect_sym(":")?;
                let mut es = Vec::new();
                while !c.is_sym(";") && !c.is_sym("}") {
                    let a = cell_name(c)?;
                    c.expect_sym("=")?;
                    let b = cell_name(c)?;
                    es.push((a, b));
                    if !c.eat_sym(",") {
                        break;
                    }
                }
                c.eat_sym(";");
                rows.push((l, es));
            }
            return Ok(PExpr::Sigma(rows));
        }
        _ => {}
    }
    if dot {
        if let Some(tr) = track_ref(&name) {
            c.expect_sym(".")?;
            let field = c.ident()?;
            return match field.as_str() {
                "loc" => Ok(PExpr::Loc(tr)),
                "alpha" => {
                    let mut ups = Vec::new();
                    if c.eat_sym("[") {
                        loop {
                            let target = c.ident()?;
                            let index = if c.eat_sym("[") {
                                let i = sast::parse_expr(c)?;
                                c.expect_sym("]")?;
                                Some(i)
                            } else {
                                None
                            };
                            c.expect_sym(":=")?;
                            let value = sast::parse_expr(c)?;
                            ups.push(Update { target, index, value });
                            if !c.eat_sym(",") {
                                break;
                            }
                        }
                        c.expect_sym("]")?;
                    }
                    Ok(PExpr::Alpha(tr, ups))
                }
                _ => {
                    if c.eat_sym("[") {
                        let i = parse(c)?;
                        c.expect_sym("]")?;
                        Ok(PExpr::Elem(tr, field, Box::new(i)))
                    } else {
                        Ok(PExpr::Var(tr, field))
                    }
                }
            };
        }
    }
    Ok(PExpr::Name(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(s: &str) {
        let e = parse_formula(s).unwrap();
        let printed = e.to_string();
        assert_eq!(parse_formula(&printed).unwrap(), e, "{printed}");
    }

    #[test]
    fn parses_and_prints() {
        round_trip("qT = qS && t = s && (T1.loc = L3 -> T1.y = 42)");
        round_trip("((t = s) && qT = qS) || (alltracks(T.loc = L2 && (S.j < S.size ? S.loc = L2 : S.loc = L5) && T.alpha = S.alpha[a := arr[0]]) && Delta(qS, [mem(arr,0)], qT))");
        round_trip("alltracks(L(S,T) in {(L1,L1), (L5,L2), (End,End)} && eqon{x, a[0]}(S,T))");
        round_trip("alltracks(sigma{ L1: RegA = a; L2: RegA = a, spill[0] = b })");
        round_trip("sumtracks(S.loc = L2 ? 1 : 0) + 1");
        round_trip("T.alpha[b[j] := a[j - 1]] = S.alpha[a[j] := b[j - 1]] && synced(T)");
        round_trip("Delta(qS, [in(secret,1), out(public,0)], qT) <-> !(S2.x != -1)");
    }

    #[test]
    fn precedence() {
        let e = parse_formula("a -> b -> c").unwrap();
        assert_eq!(
            e,
            PExpr::implies(PExpr::name("a"), PExpr::implies(PExpr::name("b"), PExpr::name("c")))
        );
        let e = parse_formula("S.x + 1 * 2 = 3 && true").unwrap();
        assert!(matches!(e, PExpr::Bin(WBin::And, _, _)));
    }

    #[test]
    fn errors_have_positions() {
        let e = parse_formula("qT = \n (").unwrap_err();
        assert_eq!(e.pos.line, 2);
    }
}
