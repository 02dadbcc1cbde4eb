//! Site-directed program transformations, each paired with the refinement
//! witness a compiler would emit for it.
//!
//! The caller names the location to transform; the analyses here only
//! justify that one rewrite (constant propagation, liveness, affine index
//! disjointness) and refuse when they cannot.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::secir::ast::{BinOp, Expr, Instr, ProgramAst};
use crate::secir::{Program, ProgramError, END};
use crate::witness::formula::{Update, WBin, S_CUR, T_CUR};
use crate::witness::{PExpr, Side, Stutter, StutterSide, TrackRef, Witness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransformKind {
    ConstantFolding,
    CommonBranchFactorization,
    SwitchInstructions,
    DeadBranchElimination,
    ExpressionFlattening,
    LoopPeeling,
    RegisterSpilling,
    DeadStoreElimination,
}

impl TransformKind {
    pub const ALL: [TransformKind; 8] = [
        TransformKind::ConstantFolding,
        TransformKind::CommonBranchFactorization,
        TransformKind::SwitchInstructions,
        TransformKind::DeadBranchElimination,
        TransformKind::ExpressionFlattening,
        TransformKind::LoopPeeling,
        TransformKind::RegisterSpilling,
        TransformKind::DeadStoreElimination,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::ConstantFolding => "constant_folding",
            TransformKind::CommonBranchFactorization => "common_branch_factorization",
            TransformKind::SwitchInstructions => "switch_instructions",
            TransformKind::DeadBranchElimination => "dead_branch_elimination",
            TransformKind::ExpressionFlattening => "expression_flattening",
            TransformKind::LoopPeeling => "loop_peeling",
            TransformKind::RegisterSpilling => "register_spilling",
            TransformKind::DeadStoreElimination => "dead_store_elimination",
        }
    }

    /// Dead store elimination is kept as a negative example and has none.
    pub fn has_witness(self) -> bool {
        self != TransformKind::DeadStoreElimination
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.replace('-', "_");
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown transformation `{s}`"))
    }
}

/// How switched instructions that produce observations are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwitchMode {
    /// Both instructions must be silent.
    #[default]
    Plain,
    /// Tracks are assumed to move in lockstep; R pins locations together.
    Synchronized,
    /// Both programs treat the pair as one transition.
    Block,
}

impl FromStr for SwitchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(SwitchMode::Plain),
            "synchronized" | "sync" => Ok(SwitchMode::Synchronized),
            "block" => Ok(SwitchMode::Block),
            _ => Err(format!("unknown switch mode `{s}`")),
        }
    }
}

/// Where to apply a transformation. `labels` is kind-specific: the
/// instructions to fold, the branch to factor or prune, the first of the
/// two instructions to switch, the choice to flatten, the loop guard to
/// peel, or the store to drop. Spilling ignores it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub labels: Vec<String>,
    pub registers: usize,
    pub mode: SwitchMode,
}

impl Default for Site {
    fn default() -> Self {
        Site {
            labels: Vec::new(),
            registers: 2,
            mode: SwitchMode::Plain,
        }
    }
}

impl Site {
    pub fn at(label: &str) -> Self {
        Site {
            labels: vec![label.to_string()],
            ..Site::default()
        }
    }

    fn label(&self, kind: TransformKind) -> Result<&str, TransformError> {
        match self.labels.as_slice() {
            [l] => Ok(l),
            _ => Err(TransformError::refuse(kind, "expected exactly one site label")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("{kind} not applicable: {reason}")]
    Inapplicable { kind: TransformKind, reason: String },
    #[error("{kind}: target does not match the transformation of the source")]
    Template { kind: TransformKind },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

impl TransformError {
    fn refuse(kind: TransformKind, reason: impl Into<String>) -> Self {
        TransformError::Inapplicable {
            kind,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformResult {
    /// The source as the witness sees it. Differs from the input only when
    /// switched instructions are remodeled as one block.
    pub source: Program,
    pub target: Program,
    pub witness: Option<Witness>,
    /// The witness only holds for purely universal properties.
    pub universal_only: bool,
    pub notes: String,
}

impl TransformResult {
    pub fn bisim(&self) -> Option<&PExpr> {
        self.witness.as_ref().and_then(|w| w.bisim.as_ref())
    }
}

pub fn apply_transform(kind: TransformKind, p: &Program, site: &Site) -> Result<TransformResult, TransformError> {
    let ast = p.ast();
    let out = match kind {
        TransformKind::ConstantFolding => fold(ast, site)?,
        TransformKind::CommonBranchFactorization => factor(ast, site.label(kind)?)?,
        TransformKind::SwitchInstructions => switch(p, site.label(kind)?, site.mode)?,
        TransformKind::DeadBranchElimination => dead_branch(ast, site.label(kind)?)?,
        TransformKind::ExpressionFlattening => flatten(ast, site.label(kind)?)?,
        TransformKind::LoopPeeling => peel(ast, site.label(kind)?)?,
        TransformKind::RegisterSpilling => spill(ast, site.registers)?,
        TransformKind::DeadStoreElimination => dead_store(ast, site.label(kind)?)?,
    };
    Ok(TransformResult {
        source: match out.source {
            Some(s) => Program::from_ast(s)?,
            None => p.clone(),
        },
        target: Program::from_ast(out.target)?,
        witness: out.witness,
        universal_only: kind == TransformKind::ExpressionFlattening,
        notes: out.notes,
    })
}

/// Re-derives the witness for an externally supplied pair, which must be
/// exactly what `apply_transform` produces for the site.
pub fn builtin_witness(
    kind: TransformKind,
    p: &Program,
    t: &Program,
    site: &Site,
) -> Result<(Witness, Option<PExpr>), TransformError> {
    let r = apply_transform(kind, p, site)?;
    let same = |a: &ProgramAst, b: &ProgramAst| {
        a.domain == b.domain && a.vars == b.vars && a.arrays == b.arrays && a.body == b.body
    };
    if !same(r.target.ast(), t.ast()) {
        return Err(TransformError::Template { kind });
    }
    let w = r.witness.ok_or_else(|| TransformError::refuse(kind, "no witness for this transformation"))?;
    let b = w.bisim.clone();
    Ok((w, b))
}

struct Out {
    source: Option<ProgramAst>,
    target: ProgramAst,
    witness: Option<Witness>,
    notes: String,
}

const ANY_PROPERTY: &str = "any";

// ---------------------------------------------------------------------------
// Formula helpers

fn int(n: i64) -> PExpr {
    PExpr::Int(n)
}

fn ne(a: PExpr, b: PExpr) -> PExpr {
    PExpr::bin(WBin::Ne, a, b)
}

fn ite(c: PExpr, a: PExpr, b: PExpr) -> PExpr {
    PExpr::Ite(Box::new(c), Box::new(a), Box::new(b))
}

fn q_equal() -> PExpr {
    PExpr::eq(PExpr::QS, PExpr::QT)
}

fn alltracks(e: PExpr) -> PExpr {
    PExpr::AllTracks(Box::new(e))
}

fn sumtracks(e: PExpr) -> PExpr {
    PExpr::SumTracks(Box::new(e))
}

fn alpha(tr: TrackRef, ups: Vec<Update>) -> PExpr {
    PExpr::Alpha(tr, ups)
}

fn alpha_equal() -> PExpr {
    PExpr::eq(alpha(S_CUR, vec![]), alpha(T_CUR, vec![]))
}

/// A program expression read as an integer on one track.
pub fn term(tr: TrackRef, e: &Expr) -> PExpr {
    match e {
        Expr::Lit(n) => int(*n),
        Expr::Var(v) => PExpr::var(tr, v),
        Expr::Elem(a, i) => PExpr::Elem(tr, a.clone(), Box::new(term(tr, i))),
        Expr::Neg(x) => PExpr::Neg(Box::new(term(tr, x))),
        Expr::Bin(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod), a, b) => {
            PExpr::bin(WBin::Arith(*op), term(tr, a), term(tr, b))
        }
        Expr::Cond(c, a, b) => ite(formula(tr, c), term(tr, a), term(tr, b)),
        Expr::Not(_) | Expr::Bin(..) => ite(formula(tr, e), int(1), int(0)),
    }
}

/// A program expression read as a condition on one track.
pub fn formula(tr: TrackRef, e: &Expr) -> PExpr {
    let cmp = |op, a: &Expr, b: &Expr| PExpr::bin(op, term(tr, a), term(tr, b));
    match e {
        Expr::Not(x) => PExpr::Not(Box::new(formula(tr, x))),
        Expr::Bin(BinOp::Eq, a, b) => cmp(WBin::Eq, a, b),
        Expr::Bin(BinOp::Ne, a, b) => cmp(WBin::Ne, a, b),
        Expr::Bin(BinOp::Lt, a, b) => cmp(WBin::Lt, a, b),
        Expr::Bin(BinOp::Le, a, b) => cmp(WBin::Le, a, b),
        Expr::Bin(BinOp::Gt, a, b) => cmp(WBin::Gt, a, b),
        Expr::Bin(BinOp::Ge, a, b) => cmp(WBin::Ge, a, b),
        Expr::Bin(BinOp::And, a, b) => PExpr::and(formula(tr, a), formula(tr, b)),
        Expr::Bin(BinOp::Or, a, b) => PExpr::or(formula(tr, a), formula(tr, b)),
        _ => ne(term(tr, e), int(0)),
    }
}

fn updates_of(kind: TransformKind, i: &Instr) -> Result<Vec<Update>, TransformError> {
    match i {
        Instr::Assign(v, e) => Ok(vec![Update {
            target: v.clone(),
            index: None,
            value: e.clone(),
        }]),
        Instr::Store(a, ix, e) => Ok(vec![Update {
            target: a.clone(),
            index: Some(ix.clone()),
            value: e.clone(),
        }]),
        Instr::Skip => Ok(vec![]),
        other => Err(TransformError::refuse(kind, format!("`{other}` is not a single assignment"))),
    }
}

fn pairs(ps: &[(String, String)]) -> PExpr {
    PExpr::Pairs(ps.to_vec())
}

fn identity_pairs(ast: &ProgramAst) -> Vec<(String, String)> {
    ast.body
        .iter()
        .map(|(l, _)| (l.clone(), l.clone()))
        .chain([(END.to_string(), END.to_string())])
        .collect()
}

/// `(loc = l1 ? n1 : (loc = l2 ? n2 : ... 0))` summed over tracks.
fn rank_table(side: Side, table: &[(String, i64)]) -> PExpr {
    let tr = TrackRef { side, track: None };
    let e = table
        .iter()
        .rev()
        .fold(int(0), |acc, (l, n)| ite(PExpr::loc_is(tr, l), int(*n), acc));
    sumtracks(e)
}

fn fact(side: Side, label: &str, var: &str, c: i64) -> PExpr {
    let tr = TrackRef { side, track: None };
    PExpr::implies(PExpr::loc_is(tr, label), PExpr::eq(PExpr::var(tr, var), int(c)))
}

fn witness(r: PExpr, bisim: Option<PExpr>, stutter: Option<Stutter>) -> Witness {
    let mut w = Witness::new(ANY_PROPERTY, r).with_default_skolems();
    w.bisim = bisim;
    w.stutter = stutter;
    w
}

// ---------------------------------------------------------------------------
// Analyses

type Consts = BTreeMap<String, i64>;

fn meet(a: &Consts, b: &Consts) -> Consts {
    a.iter()
        .filter(|(k, v)| b.get(*k) == Some(v))
        .map(|(k, v)| (k.clone(), *v))
        .collect()
}

fn has_array_reads(e: &Expr) -> bool {
    let mut xs = Vec::new();
    e.array_reads(&mut xs);
    !xs.is_empty()
}

/// Partially evaluates an expression under known constants. Returns a
/// literal when the value is fully determined.
fn fold_expr(e: &Expr, env: &Consts, d: i64) -> Expr {
    match e {
        Expr::Lit(_) | Expr::Elem(..) => e.clone(),
        Expr::Var(v) => env.get(v).map_or_else(|| e.clone(), |c| Expr::Lit(*c)),
        Expr::Not(x) => match fold_expr(x, env, d) {
            Expr::Lit(n) => Expr::Lit((n.rem_euclid(d) == 0) as i64),
            x => Expr::Not(Box::new(x)),
        },
        Expr::Neg(x) => match fold_expr(x, env, d) {
            Expr::Lit(n) => Expr::Lit(n.wrapping_neg()),
            x => Expr::Neg(Box::new(x)),
        },
        Expr::Bin(op, a, b) => {
            let (a, b) = (fold_expr(a, env, d), fold_expr(b, env, d));
            match (&a, &b) {
                (Expr::Lit(x), Expr::Lit(y)) => Expr::Lit(op.apply(*x, *y, d)),
                // x * 0 drops a read, which is only silent without array accesses
                (Expr::Lit(0), other) | (other, Expr::Lit(0)) if *op == BinOp::Mul && !has_array_reads(other) => {
                    Expr::Lit(0)
                }
                _ => Expr::bin(*op, a, b),
            }
        }
        Expr::Cond(c, a, b) => match fold_expr(c, env, d) {
            Expr::Lit(n) if n.rem_euclid(d) != 0 => fold_expr(a, env, d),
            Expr::Lit(_) => fold_expr(b, env, d),
            c => Expr::Cond(Box::new(c), Box::new(fold_expr(a, env, d)), Box::new(fold_expr(b, env, d))),
        },
    }
}

fn transfer(i: &Instr, env: &Consts, d: i64) -> Consts {
    let mut env = env.clone();
    match i {
        Instr::Assign(v, e) => match fold_expr(e, &env, d) {
            Expr::Lit(c) => {
                env.insert(v.clone(), c.rem_euclid(d));
            }
            _ => {
                env.remove(v);
            }
        },
        Instr::Input(v, _) => {
            env.remove(v);
        }
        Instr::Block(xs) => {
            for x in xs {
                env = transfer(x, &env, d);
            }
        }
        Instr::Choice(alts) => {
            let outs: Vec<Consts> = alts
                .iter()
                .map(|xs| xs.iter().fold(env.clone(), |e, x| transfer(x, &e, d)))
                .collect();
            env = outs.iter().skip(1).fold(outs[0].clone(), |a, b| meet(&a, b));
        }
        _ => {}
    }
    env
}

/// Must-constants on entry to every label (and `End`), from a forward
/// fixpoint starting with nothing known.
fn constants(ast: &ProgramAst) -> HashMap<String, Consts> {
    let mut inn: HashMap<String, Consts> = HashMap::new();
    let Some((entry, _)) = ast.body.first() else {
        return inn;
    };
    inn.insert(entry.clone(), Consts::new());
    let mut work = VecDeque::from([entry.clone()]);
    while let Some(l) = work.pop_front() {
        let Some(i) = ast.instr(&l) else { continue };
        let out = transfer(i, &inn[&l], ast.domain);
        for s in ast.successors(&l) {
            let next = match inn.get(&s) {
                Some(old) => meet(old, &out),
                None => out.clone(),
            };
            if inn.get(&s) != Some(&next) {
                inn.insert(s.clone(), next);
                work.push_back(s);
            }
        }
    }
    inn
}

fn reads_of(i: &Instr) -> BTreeSet<String> {
    i.reads().into_iter().collect()
}

/// Variables live on exit from each label.
fn live_out(ast: &ProgramAst) -> HashMap<String, BTreeSet<String>> {
    let mut live_in: HashMap<String, BTreeSet<String>> = HashMap::new();
    let arrays: BTreeSet<&str> = ast.arrays.iter().map(|(a, _)| a.as_str()).collect();
    let gen_kill = |i: &Instr, out: &BTreeSet<String>| -> BTreeSet<String> {
        fn step(i: &Instr, live: BTreeSet<String>, arrays: &BTreeSet<&str>) -> BTreeSet<String> {
            match i {
                Instr::Block(xs) => xs.iter().rev().fold(live, |l, x| step(x, l, arrays)),
                Instr::Choice(alts) => alts
                    .iter()
                    .flat_map(|xs| xs.iter().rev().fold(live.clone(), |l, x| step(x, l, arrays)))
                    .collect(),
                _ => {
                    let mut live = live;
                    for w in i.writes() {
                        if !arrays.contains(w.as_str()) {
                            live.remove(&w);
                        }
                    }
                    live.extend(reads_of(i));
                    live
                }
            }
        }
        step(i, out.clone(), &arrays)
    };
    loop {
        let mut changed = false;
        for (l, i) in ast.body.iter().rev() {
            let out: BTreeSet<String> = ast
                .successors(l)
                .iter()
                .flat_map(|s| live_in.get(s).cloned().unwrap_or_default())
                .collect();
            let inn = gen_kill(i, &out);
            if live_in.get(l) != Some(&inn) {
                live_in.insert(l.clone(), inn);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    ast.body
        .iter()
        .map(|(l, _)| {
            let out = ast
                .successors(l)
                .iter()
                .flat_map(|s| live_in.get(s).cloned().unwrap_or_default())
                .collect();
            (l.clone(), out)
        })
        .collect()
}

/// Labels reachable from the entry through control flow.
fn reachable(ast: &ProgramAst) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<String> = ast.body.first().map(|(l, _)| l.clone()).into_iter().collect();
    while let Some(l) = stack.pop() {
        if l == END || !seen.insert(l.clone()) {
            continue;
        }
        stack.extend(ast.successors(&l));
    }
    seen
}

fn retarget(i: &Instr, from: &str, to: &str) -> Instr {
    let f = |l: &String| if l == from { to.to_string() } else { l.clone() };
    match i {
        Instr::Goto(l) => Instr::Goto(f(l)),
        Instr::Branch(c, a, b) => Instr::Branch(c.clone(), f(a), f(b)),
        other => other.clone(),
    }
}

fn touches_arrays(i: &Instr) -> bool {
    match i {
        Instr::Assign(_, e) | Instr::Output(_, e) | Instr::Branch(e, _, _) => has_array_reads(e),
        Instr::Store(..) => true,
        Instr::Block(xs) => xs.iter().any(touches_arrays),
        Instr::Choice(alts) => alts.iter().flatten().any(touches_arrays),
        _ => false,
    }
}

fn has_io(i: &Instr) -> bool {
    match i {
        Instr::Input(..) | Instr::Output(..) => true,
        Instr::Block(xs) => xs.iter().any(has_io),
        Instr::Choice(alts) => alts.iter().flatten().any(has_io),
        _ => false,
    }
}

/// Silent under every attack model except branch observation.
fn is_silent_code(i: &Instr) -> bool {
    !has_io(i) && !touches_arrays(i)
}

// ---------------------------------------------------------------------------
// Constant folding

fn fold(ast: &ProgramAst, site: &Site) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::ConstantFolding;
    let env = constants(ast);
    let wanted = |l: &str| site.labels.is_empty() || site.labels.iter().any(|s| s == l);
    for l in &site.labels {
        if ast.instr(l).is_none() {
            return Err(TransformError::refuse(K, format!("no label `{l}`")));
        }
    }
    let mut target = ast.clone();
    let mut folded = Vec::new();
    for (l, i) in target.body.iter_mut() {
        let Instr::Assign(v, e) = &*i else { continue };
        if !wanted(l) || matches!(e, Expr::Lit(_)) || has_array_reads(e) {
            continue;
        }
        let Some(known) = env.get(l.as_str()) else { continue };
        if let Expr::Lit(c) = fold_expr(e, known, ast.domain) {
            folded.push((l.clone(), reads_of(i), v.clone()));
            *i = Instr::Assign(v.clone(), Expr::Lit(c.rem_euclid(ast.domain)));
        }
    }
    if folded.is_empty() && !site.labels.is_empty() {
        return Err(TransformError::refuse(K, "no constant expression at the site"));
    }
    // facts the rewrite relied on, plus the constants it produced
    let tenv = constants(&target);
    let mut facts: Vec<(String, String, i64)> = Vec::new();
    let mut add = |l: &str, v: &str| {
        if let Some(c) = tenv.get(l).and_then(|e| e.get(v)) {
            let f = (l.to_string(), v.to_string(), *c);
            if !facts.contains(&f) {
                facts.push(f);
            }
        }
    };
    for (l, reads, v) in &folded {
        for r in reads {
            add(l, r);
        }
        for s in target.successors(l) {
            add(&s, v);
        }
    }
    let order = |l: &str| target.index_of(l).unwrap_or(usize::MAX);
    facts.sort_by_key(|(l, v, _)| (order(l), v.clone()));
    let tfacts: Vec<PExpr> = facts.iter().map(|(l, v, c)| fact(Side::T, l, v, *c)).collect();
    let r = PExpr::all(
        [PExpr::state_equality()]
            .into_iter()
            .chain((!tfacts.is_empty()).then(|| alltracks(PExpr::all(tfacts.clone()))))
            .collect(),
    );
    let b = PExpr::all(
        [pairs(&identity_pairs(&target)), alpha_equal()]
            .into_iter()
            .chain(tfacts)
            .collect(),
    );
    let notes = format!(
        "folded {} instruction(s); {} constant fact(s) carried in R",
        folded.len(),
        facts.len()
    );
    Ok(Out {
        source: None,
        target,
        witness: Some(witness(r, Some(b), None)),
        notes,
    })
}

// ---------------------------------------------------------------------------
// Common-branch factorization

/// The observation of a single instruction if it is fixed statically:
/// `None` for silent code, a memory event for constant-index accesses.
fn static_event(kind: TransformKind, i: &Instr) -> Result<Option<crate::secir::Event>, TransformError> {
    use crate::secir::{Event, Ext};
    let mut acc = Vec::new();
    let mut push = |e: &Expr| -> Result<(), TransformError> {
        let mut xs = Vec::new();
        e.array_reads(&mut xs);
        for (a, ix) in xs {
            match ix {
                Expr::Lit(n) => acc.push((a.into(), *n)),
                _ => return Err(TransformError::refuse(kind, "array index of the moved instruction is not constant")),
            }
        }
        Ok(())
    };
    match i {
        Instr::Assign(_, e) => push(e)?,
        Instr::Store(a, ix, e) => {
            push(ix)?;
            push(e)?;
            match ix {
                Expr::Lit(n) => acc.push((a.as_str().into(), *n)),
                _ => return Err(TransformError::refuse(kind, "array index of the moved instruction is not constant")),
            }
        }
        Instr::Skip => {}
        other => return Err(TransformError::refuse(kind, format!("cannot move `{other}`"))),
    }
    Ok((!acc.is_empty()).then_some(Event::Ext(Ext::Mem(acc))))
}

fn factor(ast: &ProgramAst, lb: &str) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::CommonBranchFactorization;
    let Some(Instr::Branch(cond, a, b)) = ast.instr(lb) else {
        return Err(TransformError::refuse(K, format!("`{lb}` is not a conditional branch")));
    };
    let (ia, ib) = match (ast.instr(a), ast.instr(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(TransformError::refuse(K, "a branch leads directly to End")),
    };
    if ia != ib {
        return Err(TransformError::refuse(K, "branches do not start with the same instruction"));
    }
    if !ia.falls_through() {
        return Err(TransformError::refuse(K, "common instruction transfers control"));
    }
    let mut cond_reads = Vec::new();
    cond.reads(&mut cond_reads);
    if ia.writes().iter().any(|w| cond_reads.contains(w)) {
        return Err(TransformError::refuse(K, "common instruction writes a variable the guard reads"));
    }
    for l in [a, b] {
        if ast.predecessors(l) != [lb.to_string()] {
            return Err(TransformError::refuse(K, format!("`{l}` is reachable other than from `{lb}`")));
        }
    }
    let ups = updates_of(K, ia)?;
    let event = static_event(K, ia)?;
    let (ia_next, ib_next) = (
        ast.fallthrough(ast.index_of(a).expect("label")),
        ast.fallthrough(ast.index_of(b).expect("label")),
    );
    let mut target = ast.clone();
    target.body.retain(|(l, _)| l != a && l != b);
    let at = target.index_of(lb).expect("label");
    target.body[at].1 = ia.clone();
    target
        .body
        .insert(at + 1, (a.clone(), Instr::Branch(cond.clone(), ia_next, ib_next)));

    let lag = PExpr::all(vec![
        PExpr::loc_is(T_CUR, a),
        ite(formula(S_CUR, cond), PExpr::loc_is(S_CUR, a), PExpr::loc_is(S_CUR, b)),
        PExpr::eq(alpha(T_CUR, vec![]), alpha(S_CUR, ups)),
    ]);
    let automaton = match event {
        Some(e) => PExpr::Delta(vec![e]),
        None => PExpr::eq(PExpr::QT, PExpr::QS),
    };
    // the branch now sits at `a`, which names a different instruction in S
    let off_branch = ne(PExpr::Loc(T_CUR), PExpr::name(a));
    let r = PExpr::or(
        PExpr::and(PExpr::state_equality(), alltracks(off_branch.clone())),
        PExpr::and(alltracks(lag.clone()), automaton),
    );
    let b = PExpr::or(PExpr::and(PExpr::eq(PExpr::name("t"), PExpr::name("s")), off_branch), lag);
    Ok(Out {
        source: None,
        target,
        witness: Some(witness(r, Some(b), None)),
        notes: format!("moved `{ia}` above the branch at {lb}"),
    })
}

// ---------------------------------------------------------------------------
// Switching instructions

/// `j + c` as `(j, c)`; a literal as `("", c)`.
fn affine(e: &Expr) -> Option<(String, i64)> {
    match e {
        Expr::Lit(n) => Some((String::new(), *n)),
        Expr::Var(v) => Some((v.clone(), 0)),
        Expr::Bin(BinOp::Add, x, y) => match (&**x, &**y) {
            (Expr::Var(v), Expr::Lit(n)) | (Expr::Lit(n), Expr::Var(v)) => Some((v.clone(), *n)),
            _ => None,
        },
        Expr::Bin(BinOp::Sub, x, y) => match (&**x, &**y) {
            (Expr::Var(v), Expr::Lit(n)) => Some((v.clone(), -n)),
            _ => None,
        },
        _ => None,
    }
}

/// Array accesses of an instruction as `(array, index, is_write)`.
fn accesses(i: &Instr) -> Vec<(String, Expr, bool)> {
    let mut out = Vec::new();
    let reads = |e: &Expr, out: &mut Vec<(String, Expr, bool)>| {
        let mut xs = Vec::new();
        e.array_reads(&mut xs);
        out.extend(xs.into_iter().map(|(a, ix)| (a.to_string(), ix.clone(), false)));
    };
    match i {
        Instr::Assign(_, e) => reads(e, &mut out),
        Instr::Store(a, ix, e) => {
            reads(ix, &mut out);
            reads(e, &mut out);
            out.push((a.clone(), ix.clone(), true));
        }
        _ => {}
    }
    out
}

fn independent(ast: &ProgramAst, x: &Instr, y: &Instr) -> bool {
    let scalar_w = |i: &Instr| -> BTreeSet<String> {
        let arrays: BTreeSet<&String> = ast.arrays.iter().map(|(a, _)| a).collect();
        i.writes().into_iter().filter(|w| !arrays.contains(w)).collect()
    };
    let (wx, wy) = (scalar_w(x), scalar_w(y));
    let (rx, ry) = (reads_of(x), reads_of(y));
    if !wx.is_disjoint(&ry) || !wy.is_disjoint(&rx) || !wx.is_disjoint(&wy) {
        return false;
    }
    let len = |a: &str| ast.arrays.iter().find(|(n, _)| n == a).map_or(1, |(_, n)| *n as i64);
    for (a1, i1, w1) in accesses(x) {
        for (a2, i2, w2) in accesses(y) {
            if a1 != a2 || !(w1 || w2) {
                continue;
            }
            let disjoint = match (affine(&i1), affine(&i2)) {
                (Some((v1, c1)), Some((v2, c2))) if v1 == v2 && !wx.contains(&v1) && !wy.contains(&v1) => {
                    (c1 - c2).rem_euclid(len(&a1)) != 0
                }
                _ => false,
            };
            if !disjoint {
                return false;
            }
        }
    }
    true
}

/// Scalars no input can influence, directly or through control flow.
/// Every track computes the same values for them.
fn input_free(ast: &ProgramAst) -> BTreeSet<String> {
    fn flat(i: &Instr, out: &mut Vec<Instr>) {
        match i {
            Instr::Block(xs) => xs.iter().for_each(|x| flat(x, out)),
            other => out.push(other.clone()),
        }
    }
    let mut code = Vec::new();
    ast.body.iter().for_each(|(_, i)| flat(i, &mut code));
    let mut tainted: BTreeSet<String> = BTreeSet::new();
    loop {
        let before = tainted.len();
        for i in &code {
            let hit = reads_of(i).iter().any(|r| tainted.contains(r));
            match i {
                Instr::Input(v, _) => {
                    tainted.insert(v.clone());
                }
                Instr::Choice(_) => tainted.extend(i.writes()),
                Instr::Branch(..) if hit => {
                    tainted.extend(code.iter().flat_map(|i| i.writes()));
                }
                _ if hit => tainted.extend(i.writes()),
                _ => {}
            }
        }
        if tainted.len() == before {
            break;
        }
    }
    ast.vars.iter().filter(|v| !tainted.contains(*v)).cloned().collect()
}

fn switch(p: &Program, l1: &str, mode: SwitchMode) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::SwitchInstructions;
    let ast = p.ast();
    let i1 = ast
        .index_of(l1)
        .ok_or_else(|| TransformError::refuse(K, format!("no label `{l1}`")))?;
    let Some((l2, second)) = ast.body.get(i1 + 1).cloned() else {
        return Err(TransformError::refuse(K, "site is the last instruction"));
    };
    let first = ast.body[i1].1.clone();
    if !first.falls_through() || !second.falls_through() {
        return Err(TransformError::refuse(K, "switched instructions must not transfer control"));
    }
    if ast.predecessors(&l2) != [l1.to_string()] {
        return Err(TransformError::refuse(K, format!("`{l2}` is reachable other than from `{l1}`")));
    }
    if !independent(ast, &first, &second) {
        return Err(TransformError::refuse(K, "instructions are not independent"));
    }
    let observable = !(is_silent_code(&first) && is_silent_code(&second));
    let mut target = ast.clone();
    target.body[i1].1 = second.clone();
    target.body[i1 + 1].1 = first.clone();
    match mode {
        SwitchMode::Block => {
            let as_seq = |i: &Instr| match i {
                Instr::Block(xs) => xs.clone(),
                other => vec![other.clone()],
            };
            let mut source = ast.clone();
            let mut s_seq = as_seq(&first);
            s_seq.extend(as_seq(&second));
            source.body[i1].1 = Instr::Block(s_seq);
            source.body.remove(i1 + 1);
            let mut t_seq = as_seq(&second);
            t_seq.extend(as_seq(&first));
            target.body[i1].1 = Instr::Block(t_seq);
            target.body.remove(i1 + 1);
            let b = PExpr::eq(PExpr::name("t"), PExpr::name("s"));
            Ok(Out {
                source: Some(source),
                target,
                witness: Some(witness(PExpr::state_equality(), Some(b), None)),
                notes: format!("switched {l1} and {l2}, both modeled as one transition"),
            })
        }
        SwitchMode::Plain | SwitchMode::Synchronized => {
            if observable && mode == SwitchMode::Plain {
                return Err(TransformError::refuse(
                    K,
                    "switched instructions produce observations; relating automaton states becomes harder \
                     (use the synchronized or block mode)",
                ));
            }
            let delta = PExpr::eq(alpha(S_CUR, updates_of(K, &second)?), alpha(T_CUR, updates_of(K, &first)?));
            let single = PExpr::all(vec![
                PExpr::eq(PExpr::Loc(S_CUR), PExpr::Loc(T_CUR)),
                PExpr::implies(ne(PExpr::Loc(S_CUR), PExpr::name(&l2)), alpha_equal()),
                PExpr::implies(PExpr::loc_is(S_CUR, &l2), delta),
            ]);
            let mut parts = vec![q_equal(), alltracks(single.clone())];
            if mode == SwitchMode::Synchronized {
                parts.push(PExpr::Synced(Side::S));
                parts.push(PExpr::Synced(Side::T));
                // keeps the tracks on the same path through later branches
                let free = input_free(ast);
                let mut guards: BTreeSet<String> = BTreeSet::new();
                for (_, i) in &ast.body {
                    if let Instr::Branch(..) = i {
                        guards.extend(reads_of(i).into_iter().filter(|v| free.contains(v)));
                    }
                }
                for v in guards {
                    for side in [Side::S, Side::T] {
                        let first = TrackRef { side, track: Some(0) };
                        let cur = TrackRef { side, track: None };
                        parts.push(alltracks(PExpr::eq(PExpr::var(cur, &v), PExpr::var(first, &v))));
                    }
                }
            }
            Ok(Out {
                source: None,
                target,
                witness: Some(witness(PExpr::all(parts), Some(single), None)),
                notes: format!("switched {l1} and {l2}"),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Dead-branch elimination

fn dead_branch(ast: &ProgramAst, lb: &str) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::DeadBranchElimination;
    let Some(Instr::Branch(cond, _, els)) = ast.instr(lb) else {
        return Err(TransformError::refuse(K, format!("`{lb}` is not a conditional branch")));
    };
    let env = constants(ast);
    let known = env.get(lb).cloned().unwrap_or_default();
    match fold_expr(cond, &known, ast.domain) {
        Expr::Lit(n) if n.rem_euclid(ast.domain) == 0 => {}
        _ => return Err(TransformError::refuse(K, "guard is not provably false")),
    }
    let Some(else_instr) = ast.instr(els).cloned() else {
        return Err(TransformError::refuse(K, "else branch is empty"));
    };
    if ast.predecessors(els) != [lb.to_string()] {
        return Err(TransformError::refuse(K, format!("`{els}` is reachable other than from `{lb}`")));
    }
    let els_next = ast.fallthrough(ast.index_of(els).expect("label"));
    let mut target = ast.clone();
    let at = target.index_of(lb).expect("label");
    target.body[at].1 = else_instr.clone();
    target.body.retain(|(l, _)| l != els);
    for (_, i) in target.body.iter_mut() {
        *i = retarget(i, els, lb);
    }
    let live = reachable(&target);
    target.body.retain(|(l, _)| live.contains(l));
    let at = target.index_of(lb).expect("label");
    if else_instr.falls_through() && target.fallthrough(at) != els_next {
        return Err(TransformError::refuse(K, "else branch does not continue where the pruned branch joins"));
    }
    let mut ps: Vec<(String, String)> = Vec::new();
    for (l, _) in &ast.body {
        if l == els {
            ps.push((l.clone(), lb.to_string()));
        } else if live.contains(l) {
            ps.push((l.clone(), l.clone()));
        }
    }
    ps.push((END.into(), END.into()));
    let single = PExpr::and(pairs(&ps), alpha_equal());
    let rank = rank_table(Side::S, &[(lb.to_string(), 1)]);
    Ok(Out {
        source: None,
        target,
        witness: Some(witness(
            PExpr::and(q_equal(), alltracks(single.clone())),
            Some(single),
            Some(Stutter {
                side: StutterSide::Target,
                rank,
                bound: crate::witness::DEFAULT_STUTTER_BOUND,
            }),
        )),
        notes: format!("guard at {lb} is constantly false; kept the else branch"),
    })
}

// ---------------------------------------------------------------------------
// Expression flattening

struct Temps {
    used: BTreeSet<String>,
    names: Vec<String>,
}

impl Temps {
    /// The `depth`-th temporary, declared on first use.
    fn get(&mut self, depth: usize) -> String {
        while self.names.len() <= depth {
            let mut n = self.names.len();
            let name = loop {
                let cand = format!("t{n}");
                if !self.used.contains(&cand) {
                    break cand;
                }
                n += 1;
            };
            self.used.insert(name.clone());
            self.names.push(name);
        }
        self.names[depth].clone()
    }
}

/// Operands of `a op b` in three-address form. The left operand's
/// temporary is `depth`; the right one's is the next free depth.
fn operands(a: &Expr, b: &Expr, depth: usize, temps: &mut Temps, out: &mut Vec<Instr>) -> (Expr, Expr) {
    let a2 = three_address(a, depth, temps, out);
    let b2 = three_address(b, depth + usize::from(!a.is_atomic()), temps, out);
    (a2, b2)
}

/// Three-address code for `e`, leaving its value in the returned operand.
/// Temporaries are reused by nesting depth.
fn three_address(e: &Expr, depth: usize, temps: &mut Temps, out: &mut Vec<Instr>) -> Expr {
    let rhs = match e {
        Expr::Bin(op, a, b) => {
            let (a, b) = operands(a, b, depth, temps, out);
            Expr::bin(*op, a, b)
        }
        Expr::Not(x) => Expr::Not(Box::new(three_address(x, depth, temps, out))),
        Expr::Neg(x) => Expr::Neg(Box::new(three_address(x, depth, temps, out))),
        other => return other.clone(),
    };
    let t = temps.get(depth);
    out.push(Instr::Assign(t.clone(), rhs));
    Expr::Var(t)
}

fn flatten(ast: &ProgramAst, l: &str) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::ExpressionFlattening;
    let Some(Instr::Choice(alts)) = ast.instr(l) else {
        return Err(TransformError::refuse(K, format!("`{l}` has no unordered evaluation to fix")));
    };
    let mut temps = Temps {
        used: ast
            .vars
            .iter()
            .cloned()
            .chain(ast.arrays.iter().map(|(a, _)| a.clone()))
            .collect(),
        names: Vec::new(),
    };
    let mut seq = Vec::new();
    for i in &alts[0] {
        match i {
            Instr::Assign(v, e) if !e.is_atomic() => {
                let last = match e {
                    Expr::Bin(op, a, b) => {
                        let (a, b) = operands(a, b, 0, &mut temps, &mut seq);
                        Expr::bin(*op, a, b)
                    }
                    Expr::Not(x) => Expr::Not(Box::new(three_address(x, 0, &mut temps, &mut seq))),
                    Expr::Neg(x) => Expr::Neg(Box::new(three_address(x, 0, &mut temps, &mut seq))),
                    other => other.clone(),
                };
                seq.push(Instr::Assign(v.clone(), last));
            }
            other => seq.push(other.clone()),
        }
    }
    let mut target = ast.clone();
    let at = target.index_of(l).expect("label");
    target.body[at].1 = Instr::Block(seq);
    target.vars.extend(temps.names.iter().cloned());
    let kept: Vec<String> = ast.vars.clone();
    let r = PExpr::and(
        q_equal(),
        alltracks(PExpr::and(
            PExpr::eq(PExpr::Loc(S_CUR), PExpr::Loc(T_CUR)),
            PExpr::EqOn(kept.clone()),
        )),
    );
    Ok(Out {
        source: None,
        target,
        witness: Some(witness(r, None, None)),
        notes: format!(
            "fixed the first evaluation order at {l} as one block; temporaries {} are excluded from R; \
             removes nondeterminism, so only universal properties are covered",
            temps.names.join(", ")
        ),
    })
}

// ---------------------------------------------------------------------------
// Loop peeling

fn peel(ast: &ProgramAst, g: &str) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::LoopPeeling;
    let Some(Instr::Branch(cond, head, exit)) = ast.instr(g).cloned() else {
        return Err(TransformError::refuse(K, format!("`{g}` is not a loop guard")));
    };
    // the body: labels reachable from the head without passing the guard
    let mut body = BTreeSet::new();
    let mut stack = vec![head.clone()];
    while let Some(l) = stack.pop() {
        if l == g || l == END || !body.insert(l.clone()) {
            continue;
        }
        stack.extend(ast.successors(&l));
    }
    if body.contains(&exit) || !body.iter().any(|l| ast.successors(l).iter().any(|s| s == g)) {
        return Err(TransformError::refuse(K, "branch does not guard a loop"));
    }
    for l in &body {
        if ast.predecessors(l).iter().any(|p| p != g && !body.contains(p)) {
            return Err(TransformError::refuse(K, format!("loop body is entered at `{l}` from outside")));
        }
    }
    let entry_preds: Vec<String> = ast.predecessors(g).into_iter().filter(|p| !body.contains(p)).collect();
    let env = constants(ast);
    let d = ast.domain;
    let mut on_entry: Option<Consts> = None;
    for p in &entry_preds {
        let out = transfer(ast.instr(p).expect("label"), env.get(p).unwrap_or(&Consts::new()), d);
        on_entry = Some(match on_entry {
            Some(e) => meet(&e, &out),
            None => out,
        });
    }
    if ast.index_of(g) == Some(0) {
        on_entry = Some(Consts::new());
    }
    let on_entry = on_entry.unwrap_or_default();
    match fold_expr(&cond, &on_entry, d) {
        Expr::Lit(n) if n.rem_euclid(d) != 0 => {}
        _ => return Err(TransformError::refuse(K, "loop guard is not provably true on entry")),
    }
    let taken: BTreeSet<String> = ast.body.iter().map(|(l, _)| l.clone()).collect();
    let mut fresh = HashMap::new();
    for l in &body {
        let mut n = format!("P{l}");
        while taken.contains(&n) {
            n = format!("P{n}");
        }
        fresh.insert(l.clone(), n);
    }
    let rename = |i: &Instr| {
        body.iter()
            .fold(i.clone(), |i, l| retarget(&i, l, &fresh[l]))
    };
    let peel_head = fresh[&head].clone();
    let copy: Vec<(String, Instr)> = ast
        .body
        .iter()
        .filter(|(l, _)| body.contains(l))
        .map(|(l, i)| (fresh[l].clone(), rename(i)))
        .collect();
    // the copy must fall through exactly like the body does
    let body_order: Vec<&String> = ast.body.iter().map(|(l, _)| l).filter(|l| body.contains(*l)).collect();
    for (n, l) in body_order.iter().enumerate() {
        let idx = ast.index_of(l).expect("label");
        if ast.body[idx].1.falls_through() {
            let next = ast.fallthrough(idx);
            if body_order.get(n + 1).map(|x| x.as_str()) != Some(next.as_str()) {
                return Err(TransformError::refuse(K, "loop body is not laid out contiguously"));
            }
        }
    }
    let mut target = ast.clone();
    // outside jumps into the guard now enter the peeled iteration
    for (l, i) in target.body.iter_mut() {
        if !body.contains(l) && l != g {
            *i = retarget(i, g, &peel_head);
        }
    }
    let at = target.index_of(g).expect("label");
    for (n, e) in copy.into_iter().enumerate() {
        target.body.insert(at + n, e);
    }
    let mut ps: Vec<(String, String)> = identity_pairs(ast);
    ps.push((g.to_string(), peel_head.clone()));
    for l in &body_order {
        ps.push(((*l).clone(), fresh[*l].clone()));
    }
    let mut cond_vars = Vec::new();
    cond.reads(&mut cond_vars);
    cond_vars.sort();
    cond_vars.dedup();
    let mut parts = vec![
        pairs(&ps),
        alpha_equal(),
        PExpr::implies(PExpr::loc_is(T_CUR, &peel_head), formula(S_CUR, &cond)),
    ];
    // constants behind the guard fact, when an assignment just before fixes them
    for v in cond_vars {
        if let Some(c) = on_entry.get(&v) {
            parts.push(PExpr::implies(
                PExpr::loc_is(T_CUR, &peel_head),
                PExpr::eq(PExpr::var(S_CUR, &v), int(*c)),
            ));
        }
    }
    let single = PExpr::all(parts);
    let rank = rank_table(Side::S, &[(g.to_string(), 1)]);
    Ok(Out {
        source: None,
        target,
        witness: Some(witness(
            PExpr::and(q_equal(), alltracks(single.clone())),
            Some(single),
            Some(Stutter {
                side: StutterSide::Target,
                rank,
                bound: crate::witness::DEFAULT_STUTTER_BOUND,
            }),
        )),
        notes: format!("peeled the first iteration of the loop guarded at {g}; its guard holds on entry"),
    })
}

// ---------------------------------------------------------------------------
// Register spilling

struct Alloc {
    regs: Vec<Option<String>>,
    names: Vec<String>,
    /// Spill slot holding an up-to-date copy of a variable.
    slots: Vec<Option<String>>,
    code: Vec<Instr>,
    /// For each emitted instruction, the register/slot contents before it.
    sigma: Vec<Vec<(String, String)>>,
}

impl Alloc {
    fn snapshot(&self) -> Vec<(String, String)> {
        let mut m = Vec::new();
        for (r, v) in self.names.iter().zip(&self.regs) {
            if let Some(v) = v {
                m.push((r.clone(), v.clone()));
            }
        }
        for (i, v) in self.slots.iter().enumerate() {
            if let Some(v) = v {
                m.push((format!("spill[{i}]"), v.clone()));
            }
        }
        m
    }

    fn emit(&mut self, i: Instr) {
        self.sigma.push(self.snapshot());
        self.code.push(i);
    }

    fn reg_of(&self, v: &str) -> Option<usize> {
        self.regs.iter().position(|r| r.as_deref() == Some(v))
    }

    fn slot_of(&self, v: &str) -> Option<usize> {
        self.slots.iter().position(|r| r.as_deref() == Some(v))
    }

    /// A register to overwrite, saving its variable first if it is still
    /// needed and has no up-to-date copy. Registers in `keep` are not used.
    fn claim(&mut self, live: &BTreeSet<String>, keep: &[usize]) -> usize {
        let free = (0..self.regs.len()).find(|r| {
            !keep.contains(r) && self.regs[*r].as_ref().map_or(true, |v| !live.contains(v) || self.slot_of(v).is_some())
        });
        let r = free.unwrap_or_else(|| (0..self.regs.len()).find(|r| !keep.contains(r)).expect("two registers"));
        if let Some(v) = self.regs[r].clone() {
            if live.contains(&v) && self.slot_of(&v).is_none() {
                let s = self.slots.iter().position(|x| x.is_none()).unwrap_or_else(|| {
                    self.slots.push(None);
                    self.slots.len() - 1
                });
                self.emit(Instr::Store("spill".into(), Expr::Lit(s as i64), Expr::Var(self.names[r].clone())));
                self.slots[s] = Some(v);
            }
        }
        r
    }

    /// Ensures `v` is in a register, reloading it from its slot.
    fn load(&mut self, v: &str, live: &BTreeSet<String>, keep: &[usize]) -> Option<usize> {
        if let Some(r) = self.reg_of(v) {
            return Some(r);
        }
        let s = self.slot_of(v)?;
        let r = self.claim(live, keep);
        self.emit(Instr::Assign(
            self.names[r].clone(),
            Expr::Elem("spill".into(), Box::new(Expr::Lit(s as i64))),
        ));
        self.regs[r] = Some(v.to_string());
        Some(r)
    }

    /// `v` now holds a new value: drop stale copies.
    fn define(&mut self, v: &str, r: usize) {
        for x in self.regs.iter_mut().chain(self.slots.iter_mut()) {
            if x.as_deref() == Some(v) {
                *x = None;
            }
        }
        self.regs[r] = Some(v.to_string());
    }
}

fn spill(ast: &ProgramAst, nregs: usize) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::RegisterSpilling;
    if nregs < 2 {
        return Err(TransformError::refuse(K, "need at least two registers"));
    }
    if !ast.arrays.is_empty() {
        return Err(TransformError::refuse(K, "arrays are not register-allocated"));
    }
    let live = live_out(ast);
    let names: Vec<String> = (0..nregs)
        .map(|i| format!("Reg{}", (b'A' + (i % 26) as u8) as char))
        .collect();
    if names.iter().any(|n| ast.vars.contains(n)) || ast.vars.iter().any(|v| v == "spill") {
        return Err(TransformError::refuse(K, "register names clash with program variables"));
    }
    let mut al = Alloc {
        regs: vec![None; nregs],
        names: names.clone(),
        slots: Vec::new(),
        code: Vec::new(),
        sigma: Vec::new(),
    };
    // source label of each emitted instruction
    let mut origin: Vec<String> = Vec::new();
    let operand = |e: &Expr| matches!(e, Expr::Lit(_) | Expr::Var(_));
    for (l, i) in &ast.body {
        let lv = &live[l];
        let before = al.code.len();
        let reg_expr = |al: &mut Alloc, e: &Expr, keep: &mut Vec<usize>| -> Result<Expr, TransformError> {
            match e {
                Expr::Lit(_) => Ok(e.clone()),
                Expr::Var(v) => {
                    let mut need = lv.clone();
                    need.insert(v.clone());
                    let r = al
                        .load(v, &need, keep)
                        .ok_or_else(|| TransformError::refuse(K, format!("`{v}` read before written")))?;
                    keep.push(r);
                    Ok(Expr::Var(al.names[r].clone()))
                }
                _ => Err(TransformError::refuse(K, "operands must be variables or literals")),
            }
        };
        match i {
            Instr::Input(v, ch) => {
                let r = al.claim(lv, &[]);
                al.emit(Instr::Input(names[r].clone(), *ch));
                al.define(v, r);
            }
            Instr::Output(ch, e) if operand(e) => {
                let mut keep = Vec::new();
                let e = reg_expr(&mut al, e, &mut keep)?;
                al.emit(Instr::Output(*ch, e));
            }
            Instr::Assign(v, e) => {
                let (op, a, b) = match e {
                    Expr::Bin(op, a, b) if operand(a) && operand(b) => (Some(*op), (**a).clone(), (**b).clone()),
                    e if operand(e) => (None, e.clone(), Expr::Lit(0)),
                    _ => return Err(TransformError::refuse(K, format!("`{i}` is not in three-address form"))),
                };
                let mut keep = Vec::new();
                let mut reads = lv.clone();
                if let Expr::Var(x) = &b {
                    reads.insert(x.clone());
                }
                let ra = match &a {
                    Expr::Var(x) => {
                        let mut need = reads.clone();
                        need.insert(x.clone());
                        let r = al
                            .load(x, &need, &keep)
                            .ok_or_else(|| TransformError::refuse(K, format!("`{x}` read before written")))?;
                        keep.push(r);
                        Expr::Var(al.names[r].clone())
                    }
                    lit => lit.clone(),
                };
                let rb = if op.is_some() { reg_expr(&mut al, &b, &mut keep)? } else { b.clone() };
                // the result reuses the first operand's register when that
                // value is no longer needed, else a free one, else a spill
                let reusable = |al: &Alloc, r: usize| {
                    al.regs[r]
                        .as_ref()
                        .map_or(true, |x| !lv.contains(x) || al.slot_of(x).is_some())
                };
                let first = matches!(a, Expr::Var(_)).then(|| keep[0]);
                let dest = match first.filter(|r| reusable(&al, *r)) {
                    Some(r) => r,
                    None => match (0..nregs).find(|r| !keep.contains(r) && reusable(&al, *r)) {
                        Some(r) => r,
                        None => {
                            let pinned = if first.is_some() { &keep[1..] } else { &keep[..] };
                            al.claim(lv, pinned)
                        }
                    },
                };
                let rhs = match op {
                    Some(op) => Expr::bin(op, ra, rb),
                    None => ra,
                };
                al.emit(Instr::Assign(names[dest].clone(), rhs));
                al.define(v, dest);
            }
            other => return Err(TransformError::refuse(K, format!("`{other}` is not straight-line code"))),
        }
        origin.extend(std::iter::repeat(l.clone()).take(al.code.len() - before));
    }
    let tlabels: Vec<String> = (1..=al.code.len()).map(|n| format!("L{n}")).collect();
    let mut target = ProgramAst {
        name: ast.name.clone(),
        domain: ast.domain,
        vars: names.clone(),
        arrays: vec![],
        body: tlabels.iter().cloned().zip(al.code.iter().cloned()).collect(),
    };
    if !al.slots.is_empty() {
        target.arrays.push(("spill".into(), al.slots.len()));
    }
    let final_sigma = al.snapshot();
    let mut ps: Vec<(String, String)> = origin.iter().cloned().zip(tlabels.iter().cloned()).collect();
    ps.push((END.into(), END.into()));
    let mut rows: Vec<(String, Vec<(String, String)>)> = tlabels
        .iter()
        .cloned()
        .zip(al.sigma.iter().cloned())
        .filter(|(_, m)| !m.is_empty())
        .collect();
    if !final_sigma.is_empty() {
        rows.push((END.into(), final_sigma));
    }
    // steps still to go inside each source instruction's group
    let mut rank = Vec::new();
    for (n, l) in tlabels.iter().enumerate() {
        let left = origin[n + 1..].iter().take_while(|o| **o == origin[n]).count();
        if left > 0 {
            rank.push((l.clone(), left as i64));
        }
    }
    let single = PExpr::and(pairs(&ps), PExpr::Sigma(rows));
    Ok(Out {
        source: None,
        target,
        witness: Some(witness(
            PExpr::and(q_equal(), alltracks(single.clone())),
            Some(single),
            Some(Stutter {
                side: StutterSide::Source,
                rank: rank_table(Side::T, &rank),
                bound: crate::witness::DEFAULT_STUTTER_BOUND,
            }),
        )),
        notes: format!(
            "allocated {} registers, {} spill slot(s)",
            nregs,
            al.slots.len()
        ),
    })
}

// ---------------------------------------------------------------------------
// Dead store elimination

fn dead_store(ast: &ProgramAst, l: &str) -> Result<Out, TransformError> {
    const K: TransformKind = TransformKind::DeadStoreElimination;
    let i = ast
        .instr(l)
        .ok_or_else(|| TransformError::refuse(K, format!("no label `{l}`")))?;
    let stores = match i {
        Instr::Assign(..) => true,
        Instr::Block(xs) => xs.iter().all(|x| matches!(x, Instr::Assign(..))),
        _ => false,
    };
    if !stores || touches_arrays(i) {
        return Err(TransformError::refuse(K, "site is not a plain store"));
    }
    let live = &live_out(ast)[l];
    if let Some(v) = i.writes().into_iter().find(|w| live.contains(w)) {
        return Err(TransformError::refuse(K, format!("`{v}` is read later")));
    }
    let mut target = ast.clone();
    let at = target.index_of(l).expect("label");
    target.body[at].1 = Instr::Skip;
    Ok(Out {
        source: None,
        target,
        witness: None,
        notes: format!("store at {l} is never read; replaced by skip"),
    })
}
