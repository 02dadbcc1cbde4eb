//! Surface syntax of SecIR programs: names rather than resolved indices.
//!
//! Grammar (one instruction per label):
//!
//! ```text
//! program <name> domain <D>
//! var x, y
//! array a[n]
//! L1: x := input(secret)
//! L2: a[e] := e
//! L3: output(public, e)
//! L4: if (e) goto L5 else goto L6
//! L5: { x := e; y := e }
//! L6: choose { x := 1 } | { x := 2 }
//! L7: skip | halt | goto L1
//! ```

use std::fmt;

use crate::lex::{Cursor, SyntaxError, Tok};

use super::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Applies the operator to two mathematical integers. Equality is
    /// congruence modulo `domain`; ordering is on the integers themselves.
    pub fn apply(self, a: i64, b: i64, domain: i64) -> i64 {
        let truth = |v: i64| v.rem_euclid(domain) != 0;
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Mul => a.wrapping_mul(b),
            BinOp::Div => {
                if b == 0 {
                    0
                } else {
                    a.div_euclid(b)
                }
            }
            BinOp::Mod => {
                if b == 0 {
                    0
                } else {
                    a.rem_euclid(b)
                }
            }
            BinOp::Eq => ((a - b).rem_euclid(domain) == 0) as i64,
            BinOp::Ne => ((a - b).rem_euclid(domain) != 0) as i64,
            BinOp::Lt => (a < b) as i64,
            BinOp::Le => (a <= b) as i64,
            BinOp::Gt => (a > b) as i64,
            BinOp::Ge => (a >= b) as i64,
            BinOp::And => (truth(a) && truth(b)) as i64,
            BinOp::Or => (truth(a) || truth(b)) as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(i64),
    Var(String),
    Elem(String, Box<Expr>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Scalar variables and arrays read by the expression.
    pub fn reads(&self, out: &mut Vec<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Elem(a, i) => {
                out.push(a.clone());
                i.reads(out);
            }
            Expr::Not(e) | Expr::Neg(e) => e.reads(out),
            Expr::Bin(_, a, b) => {
                a.reads(out);
                b.reads(out);
            }
            Expr::Cond(c, a, b) => {
                c.reads(out);
                a.reads(out);
                b.reads(out);
            }
        }
    }

    /// Array accesses `arr[idx]` in evaluation order.
    pub fn array_reads<'a>(&'a self, out: &mut Vec<(&'a str, &'a Expr)>) {
        match self {
            Expr::Lit(_) | Expr::Var(_) => {}
            Expr::Elem(a, i) => {
                i.array_reads(out);
                out.push((a.as_str(), i));
            }
            Expr::Not(e) | Expr::Neg(e) => e.array_reads(out),
            Expr::Bin(_, a, b) => {
                a.array_reads(out);
                b.array_reads(out);
            }
            Expr::Cond(c, a, b) => {
                c.array_reads(out);
                a.array_reads(out);
                b.array_reads(out);
            }
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Expr::Lit(_) | Expr::Var(_) | Expr::Elem(..))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn sub(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
            if e.is_atomic() || matches!(e, Expr::Not(_) | Expr::Neg(_)) {
                write!(f, "{e}")
            } else {
                write!(f, "({e})")
            }
        }
        match self {
            Expr::Lit(n) if *n < 0 => write!(f, "(0 - {})", -n),
            Expr::Lit(n) => write!(f, "{n}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Elem(a, i) => write!(f, "{a}[{i}]"),
            Expr::Not(e) => {
                write!(f, "!")?;
                sub(f, e)
            }
            Expr::Neg(e) => {
                write!(f, "-")?;
                sub(f, e)
            }
            Expr::Bin(op, a, b) => {
                sub(f, a)?;
                write!(f, " {} ", op.symbol())?;
                sub(f, b)
            }
            Expr::Cond(c, a, b) => {
                sub(f, c)?;
                write!(f, " ? ")?;
                sub(f, a)?;
                write!(f, " : ")?;
                sub(f, b)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instr {
    Assign(String, Expr),
    Store(String, Expr, Expr),
    Input(String, Channel),
    Output(Channel, Expr),
    Skip,
    Halt,
    Goto(String),
    Branch(Expr, String, String),
    Block(Vec<Instr>),
    Choice(Vec<Vec<Instr>>),
}

impl Instr {
    /// True for instructions that pass control to the next label in order.
    pub fn falls_through(&self) -> bool {
        !matches!(self, Instr::Halt | Instr::Goto(_) | Instr::Branch(..))
    }

    pub fn jump_targets(&self) -> Vec<&str> {
        match self {
            Instr::Goto(l) => vec![l],
            Instr::Branch(_, a, b) => vec![a, b],
            _ => vec![],
        }
    }

    /// Variables (scalars, or whole arrays) written by the instruction.
    pub fn writes(&self) -> Vec<String> {
        match self {
            Instr::Assign(v, _) | Instr::Input(v, _) => vec![v.clone()],
            Instr::Store(a, _, _) => vec![a.clone()],
            Instr::Block(xs) => xs.iter().flat_map(|i| i.writes()).collect(),
            Instr::Choice(alts) => alts.iter().flatten().flat_map(|i| i.writes()).collect(),
            _ => vec![],
        }
    }

    /// Variables and arrays read by the instruction.
    pub fn reads(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Instr::Assign(_, e) | Instr::Output(_, e) | Instr::Branch(e, _, _) => e.reads(&mut out),
            Instr::Store(_, i, e) => {
                i.reads(&mut out);
                e.reads(&mut out);
            }
            Instr::Block(xs) => xs.iter().for_each(|i| out.extend(i.reads())),
            Instr::Choice(alts) => alts.iter().flatten().for_each(|i| out.extend(i.reads())),
            _ => {}
        }
        out
    }
}

fn fmt_seq(f: &mut fmt::Formatter<'_>, xs: &[Instr]) -> fmt::Result {
    write!(f, "{{ ")?;
    for (n, i) in xs.iter().enumerate() {
        if n > 0 {
            write!(f, "; ")?;
        }
        write!(f, "{i}")?;
    }
    write!(f, " }}")
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Assign(v, e) => write!(f, "{v} := {e}"),
            Instr::Store(a, i, e) => write!(f, "{a}[{i}] := {e}"),
            Instr::Input(v, c) => write!(f, "{v} := input({c})"),
            Instr::Output(c, e) => write!(f, "output({c}, {e})"),
            Instr::Skip => write!(f, "skip"),
            Instr::Halt => write!(f, "halt"),
            Instr::Goto(l) => write!(f, "goto {l}"),
            Instr::Branch(c, a, b) => write!(f, "if ({c}) goto {a} else goto {b}"),
            Instr::Block(xs) => fmt_seq(f, xs),
            Instr::Choice(alts) => {
                write!(f, "choose ")?;
                for (n, alt) in alts.iter().enumerate() {
                    if n > 0 {
                        write!(f, " | ")?;
                    }
                    fmt_seq(f, alt)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramAst {
    pub name: String,
    pub domain: i64,
    pub vars: Vec<String>,
    pub arrays: Vec<(String, usize)>,
    pub body: Vec<(String, Instr)>,
}

impl ProgramAst {
    pub fn instr(&self, label: &str) -> Option<&Instr> {
        self.body.iter().find(|(l, _)| l == label).map(|(_, i)| i)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.body.iter().position(|(l, _)| l == label)
    }

    /// Label control reaches after the instruction at `idx` falls through.
    pub fn fallthrough(&self, idx: usize) -> String {
        self.body
            .get(idx + 1)
            .map(|(l, _)| l.clone())
            .unwrap_or_else(|| super::END.to_string())
    }

    /// Control-flow successors of a label (`End` included).
    pub fn successors(&self, label: &str) -> Vec<String> {
        let Some(idx) = self.index_of(label) else {
            return vec![];
        };
        let ins = &self.body[idx].1;
        let mut out: Vec<String> = ins.jump_targets().into_iter().map(String::from).collect();
        if ins.falls_through() {
            out.push(self.fallthrough(idx));
        }
        out
    }

    pub fn predecessors(&self, label: &str) -> Vec<String> {
        self.body
            .iter()
            .filter(|(l, _)| self.successors(l).iter().any(|s| s == label))
            .map(|(l, _)| l.clone())
            .collect()
    }
}

impl fmt::Display for ProgramAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "program {} domain {}", self.name, self.domain)?;
        for v in &self.vars {
            writeln!(f, "var {v}")?;
        }
        for (a, n) in &self.arrays {
            writeln!(f, "array {a}[{n}]")?;
        }
        for (l, i) in &self.body {
            writeln!(f, "{l}: {i}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing

pub fn parse_ast(src: &str) -> Result<ProgramAst, SyntaxError> {
    let mut c = Cursor::new(src)?;
    c.expect_kw("program")?;
    let name = c.ident()?;
    c.expect_kw("domain")?;
    let domain = c.int()?;
    if domain < 1 {
        return c.err("domain bound must be positive");
    }
    let mut ast = ProgramAst {
        name,
        domain,
        vars: vec![],
        arrays: vec![],
        body: vec![],
    };
    loop {
        if c.eat_kw("var") {
            loop {
                ast.vars.push(c.ident()?);
                if !c.eat_sym(",") {
                    break;
                }
            }
        } else if c.is_kw("array") && !matches!(c.peek_at(1), Some(Tok::Sym(":"))) {
            c.next();
            loop {
                let a = c.ident()?;
                c.expect_sym("[")?;
                let n = c.int()?;
                if n < 1 {
                    return c.err(format!("array `{a}` must have positive length"));
                }
                c.expect_sym("]")?;
                ast.arrays.push((a, n as usize));
                if !c.eat_sym(",") {
                    break;
                }
            }
        } else {
            break;
        }
    }
    while !c.at_end() {
        let label = c.ident()?;
        c.expect_sym(":")?;
        let ins = parse_instr(&mut c, true)?;
        c.eat_sym(";");
        ast.body.push((label, ins));
    }
    Ok(ast)
}

fn parse_chan(c: &mut Cursor) -> Result<Channel, SyntaxError> {
    match c.ident()?.as_str() {
        "secret" => Ok(Channel::Secret),
        "public" => Ok(Channel::Public),
        other => c.err(format!("unknown channel `{other}` (expected secret or public)")),
    }
}

fn parse_seq(c: &mut Cursor) -> Result<Vec<Instr>, SyntaxError> {
    c.expect_sym("{")?;
    let mut xs = Vec::new();
    while !c.eat_sym("}") {
        xs.push(parse_instr(c, false)?);
        if !c.eat_sym(";") && !c.is_sym("}") {
            return c.err(format!("expected `;` or `}}`, found {}", c.describe()));
        }
    }
    Ok(xs)
}

fn parse_instr(c: &mut Cursor, top: bool) -> Result<Instr, SyntaxError> {
    if c.is_sym("{") {
        if !top {
            return c.err("nested blocks are not allowed");
        }
        return Ok(Instr::Block(parse_seq(c)?));
    }
    if c.eat_kw("choose") {
        if !top {
            return c.err("`choose` is only allowed at top level");
        }
        let mut alts = vec![parse_seq(c)?];
        while c.eat_sym("|") {
            alts.push(parse_seq(c)?);
        }
        return Ok(Instr::Choice(alts));
    }
    if c.eat_kw("skip") {
        return Ok(Instr::Skip);
    }
    if c.eat_kw("halt") {
        return Ok(Instr::Halt);
    }
    if c.eat_kw("goto") {
        return Ok(Instr::Goto(c.ident()?));
    }
    if c.is_kw("if") && matches!(c.peek_at(1), Some(Tok::Sym("("))) {
        c.next();
        c.expect_sym("(")?;
        let cond = parse_expr(c)?;
        c.expect_sym(")")?;
        c.expect_kw("goto")?;
        let a = c.ident()?;
        c.expect_kw("else")?;
        c.expect_kw("goto")?;
        let b = c.ident()?;
        return Ok(Instr::Branch(cond, a, b));
    }
    if c.is_kw("output") && matches!(c.peek_at(1), Some(Tok::Sym("("))) {
        c.next();
        c.expect_sym("(")?;
        let ch = parse_chan(c)?;
        c.expect_sym(",")?;
        let e = parse_expr(c)?;
        c.expect_sym(")")?;
        return Ok(Instr::Output(ch, e));
    }
    let target = c.ident()?;
    if c.eat_sym("[") {
        let idx = parse_expr(c)?;
        c.expect_sym("]")?;
        c.expect_sym(":=")?;
        let e = parse_expr(c)?;
        return Ok(Instr::Store(target, idx, e));
    }
    c.expect_sym(":=")?;
    if c.is_kw("input") && matches!(c.peek_at(1), Some(Tok::Sym("("))) {
        c.next();
        c.expect_sym("(")?;
        let ch = parse_chan(c)?;
        c.expect_sym(")")?;
        return Ok(Instr::Input(target, ch));
    }
    Ok(Instr::Assign(target, parse_expr(c)?))
}

pub fn parse_expr(c: &mut Cursor) -> Result<Expr, SyntaxError> {
    let cond = parse_or(c)?;
    if c.eat_sym("?") {
        let a = parse_expr(c)?;
        c.expect_sym(":")?;
        let b = parse_expr(c)?;
        return Ok(Expr::Cond(Box::new(cond), Box::new(a), Box::new(b)));
    }
    Ok(cond)
}

fn parse_or(c: &mut Cursor) -> Result<Expr, SyntaxError> {
    let mut e = parse_and(c)?;
    while c.eat_sym("||") {
        e = Expr::bin(BinOp::Or, e, parse_and(c)?);
    }
    Ok(e)
}

fn parse_and(c: &mut Cursor) -> Result<Expr, SyntaxError> {
    let mut e = parse_cmp(c)?;
    while c.eat_sym("&&") {
        e = Expr::bin(BinOp::And, e, parse_cmp(c)?);
    }
    Ok(e)
}

fn parse_cmp(c: &mut Cursor) -> Result<Expr, SyntaxError> {
    let e = parse_add(c)?;
    let op = [
        ("==", BinOp::Eq),
        ("!=", BinOp::Ne),
        ("<=", BinOp::Le),
        (">=", BinOp::Ge),
        ("<", BinOp::Lt),
        (">", BinOp::Gt),
    ]
    .into_iter()
    .find(|(s, _)| c.is_sym(s));
    match op {
        Some((s, op)) => {
            c.expect_sym(s)?;
            Ok(Expr::bin(op, e, parse_add(c)?))
        }
        None => Ok(e),
    }
}

fn parse_add(c: &mut Cursor) -> Result<Expr, SyntaxError> {
    let mut e = parse_mul(c)?;
    loop {
        if c.eat_sym("+") {
            e = Expr::bin(BinOp::Add, e, parse_mul(c)?);
        } else if c.eat_sym("-") {
            e = Expr::bin(BinOp::Sub, e, parse_mul(c)?);
        } else {
            return Ok(e);
        }
    }
}

fn parse_mul(c: &mut Cursor) -> Result<Expr, SyntaxError> {
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
        e = Expr::bin(op, e, parse_unary(c)?);
    }
}

fn parse_unary(c: &mut Cursor) -> Result<Expr, SyntaxError> {
    if c.eat_sym("!") {
        return Ok(Expr::Not(Box::new(parse_unary(c)?)));
    }
    if c.eat_sym("-") {
        return Ok(Expr::Neg(Box::new(parse_unary(c)?)));
    }
    if c.eat_sym("(") {
        let e = parse_expr(c)?;
        c.expect_sym(")")?;
        return Ok(e);
    }
    match c.peek().cloned() {
        Some(Tok::Int(n)) => {
            c.next();
            Ok(Expr::Lit(n))
        }
        Some(Tok::Ident(name)) => {
            c.next();
            if c.eat_sym("[") {
                let i = parse_expr(c)?;
                c.expect_sym("]")?;
                Ok(Expr::Elem(name, Box::new(i)))
            } else {
                Ok(Expr::Var(name))
            }
        }
        _ => c.err(format!("expected expression, found {}", c.describe())),
    }
}
