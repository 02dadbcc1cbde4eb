//! Typed, name-resolved witness formulas and their three-valued evaluation.
//!
//! Evaluation works over partially known pair states: a cell may be
//! unknown, and connectives follow Kleene logic. The refinement checker
//! uses this to prune candidate pairs before every cell is fixed.

use super::formula::{PExpr, Side, TrackRef, Update, WBin};
use super::WitnessError;
use crate::automaton::{AState, Acceptor, CmpOp, ProductState};
use crate::secir::ast::{self as sast, BinOp};
use crate::secir::{Config, Event, Program};

/// What a formula may inspect of a (target, source) pair of product states.
pub trait View {
    fn aut(&self, side: Side) -> &AState;
    fn loc(&self, side: Side, track: usize) -> usize;
    fn exposed(&self, side: Side, track: usize) -> bool;
    fn cell(&self, side: Side, track: usize, cell: usize) -> Option<i64>;
}

/// A fully known pair.
pub struct FullView<'a> {
    pub t: &'a ProductState,
    pub s: &'a ProductState,
}

impl FullView<'_> {
    fn side(&self, side: Side) -> &ProductState {
        match side {
            Side::T => self.t,
            Side::S => self.s,
        }
    }
}

impl View for FullView<'_> {
    fn aut(&self, side: Side) -> &AState {
        &self.side(side).a
    }
    fn loc(&self, side: Side, track: usize) -> usize {
        self.side(side).cfgs[track].loc
    }
    fn exposed(&self, side: Side, track: usize) -> bool {
        self.side(side).cfgs[track].exposed
    }
    fn cell(&self, side: Side, track: usize, cell: usize) -> Option<i64> {
        Some(self.side(side).cfgs[track].alpha[cell])
    }
}

/// A pair whose skeleton is known and whose cells may be unknown. Cells
/// are stored track-major: `track * cells_per_track + cell`.
pub struct PartialView<'a> {
    pub tq: &'a AState,
    pub sq: &'a AState,
    pub tskel: &'a [(usize, bool)],
    pub sskel: &'a [(usize, bool)],
    pub tcells: &'a [Option<i64>],
    pub scells: &'a [Option<i64>],
    pub tn: usize,
    pub sn: usize,
}

impl View for PartialView<'_> {
    fn aut(&self, side: Side) -> &AState {
        match side {
            Side::T => self.tq,
            Side::S => self.sq,
        }
    }
    fn loc(&self, side: Side, track: usize) -> usize {
        match side {
            Side::T => self.tskel[track].0,
            Side::S => self.sskel[track].0,
        }
    }
    fn exposed(&self, side: Side, track: usize) -> bool {
        match side {
            Side::T => self.tskel[track].1,
            Side::S => self.sskel[track].1,
        }
    }
    fn cell(&self, side: Side, track: usize, cell: usize) -> Option<i64> {
        match side {
            Side::T => self.tcells[track * self.tn + cell],
            Side::S => self.scells[track * self.sn + cell],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Track {
    Cur,
    Fixed(usize),
}

impl Track {
    fn at(self, cur: usize) -> usize {
        match self {
            Track::Cur => cur,
            Track::Fixed(i) => i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Cell(usize),
    Elem { base: usize, len: usize, index: IExpr },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaTerm {
    pub side: Side,
    pub track: Track,
    pub updates: Vec<(Target, IExpr)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IExpr {
    Lit(i64),
    Cell(Side, Track, usize),
    Elem { side: Side, track: Track, base: usize, len: usize, index: Box<IExpr> },
    Op(BinOp, Box<IExpr>, Box<IExpr>),
    Neg(Box<IExpr>),
    Ite(Box<BExpr>, Box<IExpr>, Box<IExpr>),
    Sum(Box<IExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BExpr {
    Const(bool),
    QEq,
    QIs(Side, usize),
    Delta(Vec<Event>),
    StateEq,
    LocIs(Side, Track, usize),
    /// Locations of two tracks (possibly different sides) carry the same label.
    LocEq(Side, Track, Side, Track),
    AlphaEq(AlphaTerm, AlphaTerm),
    EqOn(Track, Vec<(usize, usize)>),
    /// `pairs[source loc][target loc]`
    Pairs(Track, Vec<Vec<bool>>),
    /// Per target location, (target cell, source cell) equalities.
    Sigma(Track, Vec<Vec<(usize, usize)>>),
    Synced(Side),
    Truthy(IExpr),
    Cmp(CmpOp, IExpr, IExpr),
    Not(Box<BExpr>),
    And(Vec<BExpr>),
    Or(Vec<BExpr>),
    Implies(Box<BExpr>, Box<BExpr>),
    Iff(Box<BExpr>, Box<BExpr>),
    Ite(Box<BExpr>, Box<BExpr>, Box<BExpr>),
    All(Box<BExpr>),
    Any(Box<BExpr>),
}

/// Static context: the two programs, the acceptor (absent for
/// single-track bisimulation formulas) and the track count.
pub struct Ctx<'a> {
    pub s: &'a Program,
    pub t: &'a Program,
    pub acceptor: Option<&'a Acceptor>,
    pub k: usize,
    /// Source location -> target location with the same label.
    s_to_t_loc: Vec<Option<usize>>,
    t_to_s_loc: Vec<Option<usize>>,
    /// (target cell, source cell) by equal name, when the name sets agree.
    same_cells: Option<Vec<(usize, usize)>>,
}

impl<'a> Ctx<'a> {
    pub fn new(s: &'a Program, t: &'a Program, acceptor: Option<&'a Acceptor>, k: usize) -> Self {
        let s_to_t_loc = (0..=s.end()).map(|l| t.loc_index(s.loc_name(l))).collect();
        let t_to_s_loc = (0..=t.end()).map(|l| s.loc_index(t.loc_name(l))).collect();
        let same_cells = if t.num_cells() == s.num_cells() {
            t.cell_names
                .iter()
                .enumerate()
                .map(|(i, n)| s.cell_index(n).map(|j| (i, j)))
                .collect()
        } else {
            None
        };
        Ctx {
            s,
            t,
            acceptor,
            k,
            s_to_t_loc,
            t_to_s_loc,
            same_cells,
        }
    }

    pub fn domain(&self) -> i64 {
        self.s.domain
    }

    /// Source location carrying the label of target location `l`.
    pub fn t_to_s(&self, l: usize) -> Option<usize> {
        self.t_to_s_loc[l]
    }

    pub fn s_to_t(&self, l: usize) -> Option<usize> {
        self.s_to_t_loc[l]
    }

    pub fn same_cells(&self) -> Option<&[(usize, usize)]> {
        self.same_cells.as_deref()
    }

    fn prog(&self, side: Side) -> &Program {
        match side {
            Side::T => self.t,
            Side::S => self.s,
        }
    }

    fn track(&self, tr: &TrackRef) -> Result<Track, WitnessError> {
        match tr.track {
            None => Ok(Track::Cur),
            Some(i) if i < self.k => Ok(Track::Fixed(i)),
            Some(i) => Err(WitnessError::Type(format!(
                "track {} out of range for {} tracks",
                i + 1,
                self.k
            ))),
        }
    }

    fn need_acceptor(&self, what: &str) -> Result<&Acceptor, WitnessError> {
        self.acceptor
            .ok_or_else(|| WitnessError::Type(format!("`{what}` is not available in this formula")))
    }

    fn label(&self, side: Side, name: &str) -> Result<usize, WitnessError> {
        self.prog(side)
            .loc_index(name)
            .ok_or_else(|| WitnessError::Unknown(format!("label `{name}` in {side}")))
    }

    fn cell(&self, side: Side, name: &str) -> Result<usize, WitnessError> {
        self.prog(side)
            .cell_index(name)
            .ok_or_else(|| WitnessError::Unknown(format!("variable `{name}` in {side}")))
    }

    /// Cells named `name` (a scalar, an array, or `arr[i]`).
    fn cells_of(&self, side: Side, name: &str) -> Result<Vec<usize>, WitnessError> {
        let p = self.prog(side);
        if let Some(a) = p.array(name) {
            return Ok((a.base..a.base + a.len).collect());
        }
        Ok(vec![self.cell(side, name)?])
    }

    fn name_pairs(&self, names: &[String]) -> Result<Vec<(usize, usize)>, WitnessError> {
        let mut out = Vec::new();
        for n in names {
            let t = self.cells_of(Side::T, n)?;
            let s = self.cells_of(Side::S, n)?;
            if t.len() != s.len() {
                return Err(WitnessError::Type(format!("`{n}` has different shapes in S and T")));
            }
            out.extend(t.into_iter().zip(s));
        }
        Ok(out)
    }

    pub fn compile_bool(&self, e: &PExpr) -> Result<BExpr, WitnessError> {
        let b = |e: &PExpr| self.compile_bool(e).map(Box::new);
        Ok(match e {
            PExpr::Bool(v) => BExpr::Const(*v),
            PExpr::Not(x) => BExpr::Not(b(x)?),
            PExpr::Bin(WBin::And, x, y) => BExpr::And(vec![self.compile_bool(x)?, self.compile_bool(y)?]),
            PExpr::Bin(WBin::Or, x, y) => BExpr::Or(vec![self.compile_bool(x)?, self.compile_bool(y)?]),
            PExpr::Bin(WBin::Implies, x, y) => BExpr::Implies(b(x)?, b(y)?),
            PExpr::Bin(WBin::Iff, x, y) => BExpr::Iff(b(x)?, b(y)?),
            PExpr::Bin(WBin::Eq, x, y) => self.equality(x, y)?,
            PExpr::Bin(WBin::Ne, x, y) => BExpr::Not(Box::new(self.equality(x, y)?)),
            PExpr::Bin(op @ (WBin::Lt | WBin::Le | WBin::Gt | WBin::Ge), x, y) => {
                let op = match op {
                    WBin::Lt => CmpOp::Lt,
                    WBin::Le => CmpOp::Le,
                    WBin::Gt => CmpOp::Gt,
                    _ => CmpOp::Ge,
                };
                BExpr::Cmp(op, self.compile_int(x)?, self.compile_int(y)?)
            }
            PExpr::Ite(c, x, y) => BExpr::Ite(b(c)?, b(x)?, b(y)?),
            PExpr::AllTracks(x) => BExpr::All(b(x)?),
            PExpr::AnyTrack(x) => BExpr::Any(b(x)?),
            PExpr::Delta(letters) => {
                let a = self.need_acceptor("Delta")?;
                let k = a.k();
                let letters = if letters.len() == 1 && k > 1 {
                    vec![letters[0].clone(); k]
                } else {
                    letters.clone()
                };
                if letters.len() != k {
                    return Err(WitnessError::Type(format!(
                        "Delta letter has {} components, expected {k}",
                        letters.len()
                    )));
                }
                BExpr::Delta(letters)
            }
            PExpr::EqOn(names) => BExpr::EqOn(Track::Cur, self.name_pairs(names)?),
            PExpr::Pairs(ps) => {
                let mut m = vec![vec![false; self.t.end() + 1]; self.s.end() + 1];
                for (a, b) in ps {
                    m[self.label(Side::S, a)?][self.label(Side::T, b)?] = true;
                }
                BExpr::Pairs(Track::Cur, m)
            }
            PExpr::Sigma(rows) => {
                let mut table = vec![Vec::new(); self.t.end() + 1];
                for (l, es) in rows {
                    let l = self.label(Side::T, l)?;
                    for (tn, sn) in es {
                        table[l].push((self.cell(Side::T, tn)?, self.cell(Side::S, sn)?));
                    }
                }
                BExpr::Sigma(Track::Cur, table)
            }
            PExpr::Synced(side) => BExpr::Synced(*side),
            PExpr::Name(n) => return Err(WitnessError::Type(format!("`{n}` is not a formula"))),
            other => BExpr::Truthy(self.compile_int(other)?),
        })
    }

    fn equality(&self, x: &PExpr, y: &PExpr) -> Result<BExpr, WitnessError> {
        use PExpr::*;
        let q_side = |e: &PExpr| match e {
            QT => Some(Side::T),
            QS => Some(Side::S),
            _ => None,
        };
        Ok(match (x, y) {
            (Name(a), Name(b)) if a == "t" && b == "s" || a == "s" && b == "t" => {
                if self.same_cells.is_none() {
                    return Err(WitnessError::Type("`t = s` needs identical declarations in S and T".into()));
                }
                BExpr::StateEq
            }
            (QT | QS, QT | QS) => {
                self.need_acceptor("qT/qS")?;
                if x == y {
                    BExpr::Const(true)
                } else {
                    BExpr::QEq
                }
            }
            (QT | QS, Name(n)) | (Name(n), QT | QS) => {
                let side = q_side(x).or(q_side(y)).expect("one side is a state");
                let a = self.need_acceptor("qT/qS")?;
                let q = a
                    .base()
                    .state_index(n)
                    .ok_or_else(|| WitnessError::Unknown(format!("automaton state `{n}`")))?;
                BExpr::QIs(side, q)
            }
            (Loc(tr), Name(n)) | (Name(n), Loc(tr)) => {
                BExpr::LocIs(tr.side, self.track(tr)?, self.label(tr.side, n)?)
            }
            (Loc(a), Loc(b)) => BExpr::LocEq(a.side, self.track(a)?, b.side, self.track(b)?),
            (Alpha(a, ua), Alpha(b, ub)) => {
                let l = self.alpha_term(a, ua)?;
                let r = self.alpha_term(b, ub)?;
                if a.side == b.side {
                    BExpr::AlphaEq(l, r)
                } else if self.same_cells.is_some() {
                    BExpr::AlphaEq(l, r)
                } else {
                    return Err(WitnessError::Type("memory equality needs identical declarations in S and T".into()));
                }
            }
            _ => BExpr::Cmp(CmpOp::Eq, self.compile_int(x)?, self.compile_int(y)?),
        })
    }

    fn alpha_term(&self, tr: &TrackRef, ups: &[Update]) -> Result<AlphaTerm, WitnessError> {
        let track = self.track(tr)?;
        let mut updates = Vec::new();
        for u in ups {
            let p = self.prog(tr.side);
            let target = match &u.index {
                None => Target::Cell(self.cell(tr.side, &u.target)?),
                Some(i) => {
                    let a = p
                        .array(&u.target)
                        .ok_or_else(|| WitnessError::Unknown(format!("array `{}` in {}", u.target, tr.side)))?;
                    Target::Elem {
                        base: a.base,
                        len: a.len,
                        index: self.program_expr(tr.side, track, i)?,
                    }
                }
            };
            updates.push((target, self.program_expr(tr.side, track, &u.value)?));
        }
        Ok(AlphaTerm {
            side: tr.side,
            track,
            updates,
        })
    }

    /// A SecIR expression read on one side and track.
    fn program_expr(&self, side: Side, track: Track, e: &sast::Expr) -> Result<IExpr, WitnessError> {
        let r = |e: &sast::Expr| self.program_expr(side, track, e).map(Box::new);
        let p = self.prog(side);
        Ok(match e {
            sast::Expr::Lit(n) => IExpr::Lit(*n),
            sast::Expr::Var(v) => IExpr::Cell(
                side,
                track,
                p.scalar(v)
                    .ok_or_else(|| WitnessError::Unknown(format!("variable `{v}` in {side}")))?,
            ),
            sast::Expr::Elem(a, i) => {
                let info = p
                    .array(a)
                    .ok_or_else(|| WitnessError::Unknown(format!("array `{a}` in {side}")))?;
                IExpr::Elem {
                    side,
                    track,
                    base: info.base,
                    len: info.len,
                    index: r(i)?,
                }
            }
            sast::Expr::Not(x) => IExpr::Op(BinOp::Eq, r(x)?, Box::new(IExpr::Lit(0))),
            sast::Expr::Neg(x) => IExpr::Neg(r(x)?),
            sast::Expr::Bin(op, x, y) => IExpr::Op(*op, r(x)?, r(y)?),
            sast::Expr::Cond(c, x, y) => IExpr::Ite(
                Box::new(BExpr::Truthy(self.program_expr(side, track, c)?)),
                r(x)?,
                r(y)?,
            ),
        })
    }

    pub fn compile_int(&self, e: &PExpr) -> Result<IExpr, WitnessError> {
        let i = |e: &PExpr| self.compile_int(e).map(Box::new);
        Ok(match e {
            PExpr::Int(n) => IExpr::Lit(*n),
            PExpr::Var(tr, v) => {
                let p = self.prog(tr.side);
                let c = p
                    .scalar(v)
                    .or_else(|| if p.array(v).is_none() { p.cell_index(v) } else { None })
                    .ok_or_else(|| WitnessError::Unknown(format!("variable `{v}` in {}", tr.side)))?;
                IExpr::Cell(tr.side, self.track(tr)?, c)
            }
            PExpr::Elem(tr, a, ix) => {
                let info = self
                    .prog(tr.side)
                    .array(a)
                    .ok_or_else(|| WitnessError::Unknown(format!("array `{a}` in {}", tr.side)))?;
                IExpr::Elem {
                    side: tr.side,
                    track: self.track(tr)?,
                    base: info.base,
                    len: info.len,
                    index: i(ix)?,
                }
            }
            PExpr::Bin(WBin::Arith(op), x, y) => IExpr::Op(*op, i(x)?, i(y)?),
            PExpr::Neg(x) => IExpr::Neg(i(x)?),
            PExpr::Ite(c, x, y) => IExpr::Ite(Box::new(self.compile_bool(c)?), i(x)?, i(y)?),
            PExpr::SumTracks(x) => IExpr::Sum(i(x)?),
            PExpr::Name(n) => return Err(WitnessError::Unknown(format!("name `{n}` used as a number"))),
            other => {
                return Err(WitnessError::Type(format!("`{other}` is not an integer expression")))
            }
        })
    }
}

fn or3(a: Option<bool>, b: impl FnOnce() -> Option<bool>) -> Option<bool> {
    match a {
        Some(true) => Some(true),
        Some(false) => b(),
        None => match b() {
            Some(true) => Some(true),
            _ => None,
        },
    }
}

/// Kleene conjunction over a sequence of lazily evaluated operands.
fn all3(xs: impl Iterator<Item = Option<bool>>) -> Option<bool> {
    let mut unknown = false;
    for x in xs {
        match x {
            Some(false) => return Some(false),
            None => unknown = true,
            Some(true) => {}
        }
    }
    if unknown {
        None
    } else {
        Some(true)
    }
}

fn any3(xs: impl Iterator<Item = Option<bool>>) -> Option<bool> {
    let mut unknown = false;
    for x in xs {
        match x {
            Some(true) => return Some(true),
            None => unknown = true,
            Some(false) => {}
        }
    }
    if unknown {
        None
    } else {
        Some(false)
    }
}

pub struct Eval<'c, 'a> {
    pub cx: &'c Ctx<'a>,
}

impl Eval<'_, '_> {
    fn eq_int(&self, a: Option<i64>, b: Option<i64>) -> Option<bool> {
        Some((a? - b?).rem_euclid(self.cx.domain()) == 0)
    }

    fn eq_cells<V: View>(&self, v: &V, ts: Side, ti: usize, ss: Side, si: usize, pairs: &[(usize, usize)]) -> Option<bool> {
        all3(pairs.iter().map(|&(a, b)| self.eq_int(v.cell(ts, ti, a), v.cell(ss, si, b))))
    }

    fn alpha_value<V: View>(&self, v: &V, t: &AlphaTerm, cur: usize, cell: usize) -> Option<i64> {
        let tr = t.track.at(cur);
        // updates apply simultaneously to the base memory; the last write wins
        let mut result = v.cell(t.side, tr, cell);
        for (target, val) in &t.updates {
            let hit = match target {
                Target::Cell(c) => Some(*c == cell),
                Target::Elem { base, len, index } => {
                    if cell < *base || cell >= base + len {
                        Some(false)
                    } else {
                        self.int(index, v, cur)
                            .map(|i| base + i.rem_euclid(*len as i64) as usize == cell)
                    }
                }
            };
            match hit {
                Some(true) => result = self.int(val, v, cur).map(|x| x.rem_euclid(self.cx.domain())),
                Some(false) => {}
                None => return None,
            }
        }
        result
    }

    pub fn int<V: View>(&self, e: &IExpr, v: &V, cur: usize) -> Option<i64> {
        match e {
            IExpr::Lit(n) => Some(*n),
            IExpr::Cell(side, tr, c) => v.cell(*side, tr.at(cur), *c),
            IExpr::Elem { side, track, base, len, index } => {
                let i = self.int(index, v, cur)?;
                v.cell(*side, track.at(cur), base + i.rem_euclid(*len as i64) as usize)
            }
            IExpr::Op(op, a, b) => {
                let a = self.int(a, v, cur);
                let b = self.int(b, v, cur);
                match (op, a, b) {
                    (BinOp::And, Some(x), _) | (BinOp::And, _, Some(x))
                        if x.rem_euclid(self.cx.domain()) == 0 =>
                    {
                        Some(0)
                    }
                    (BinOp::Or, Some(x), _) | (BinOp::Or, _, Some(x))
                        if x.rem_euclid(self.cx.domain()) != 0 =>
                    {
                        Some(1)
                    }
                    (_, Some(a), Some(b)) => Some(op.apply(a, b, self.cx.domain())),
                    _ => None,
                }
            }
            IExpr::Neg(a) => Some(self.int(a, v, cur)?.wrapping_neg()),
            IExpr::Ite(c, a, b) => match self.eval(c, v, cur) {
                Some(true) => self.int(a, v, cur),
                Some(false) => self.int(b, v, cur),
                None => {
                    let (a, b) = (self.int(a, v, cur), self.int(b, v, cur));
                    if a.is_some() && a == b {
                        a
                    } else {
                        None
                    }
                }
            },
            IExpr::Sum(x) => {
                let mut total = 0i64;
                for i in 0..self.cx.k {
                    total += self.int(x, v, i)?;
                }
                Some(total)
            }
        }
    }

    pub fn eval<V: View>(&self, e: &BExpr, v: &V, cur: usize) -> Option<bool> {
        let cx = self.cx;
        match e {
            BExpr::Const(b) => Some(*b),
            BExpr::QEq => Some(v.aut(Side::T).same_modulo_bit(v.aut(Side::S))),
            BExpr::QIs(side, q) => Some(v.aut(*side).q == *q),
            BExpr::Delta(letter) => {
                let a = cx.acceptor.expect("checked at compile time");
                let target = v.aut(Side::T);
                // an overflowing step has no successor
                let succ = a.step(v.aut(Side::S), letter).unwrap_or_default();
                Some(succ.iter().any(|s| s.same_modulo_bit(target)))
            }
            BExpr::StateEq => {
                let pairs = cx.same_cells.as_deref().unwrap_or(&[]);
                all3((0..cx.k).map(|i| {
                    let tl = v.loc(Side::T, i);
                    if cx.t_to_s_loc[tl] != Some(v.loc(Side::S, i))
                        || v.exposed(Side::T, i) != v.exposed(Side::S, i)
                    {
                        return Some(false);
                    }
                    self.eq_cells(v, Side::T, i, Side::S, i, pairs)
                }))
            }
            BExpr::LocIs(side, tr, l) => Some(v.loc(*side, tr.at(cur)) == *l),
            BExpr::LocEq(sa, ta, sb, tb) => {
                let la = v.loc(*sa, ta.at(cur));
                let lb = v.loc(*sb, tb.at(cur));
                Some(match (sa, sb) {
                    (Side::T, Side::S) => cx.t_to_s_loc[la] == Some(lb),
                    (Side::S, Side::T) => cx.s_to_t_loc[la] == Some(lb),
                    _ => la == lb,
                })
            }
            BExpr::AlphaEq(a, b) => {
                let n = cx.prog(a.side).num_cells();
                let pairs: Vec<(usize, usize)> = if a.side == b.side {
                    (0..n).map(|i| (i, i)).collect()
                } else {
                    let same = cx.same_cells.as_deref().unwrap_or(&[]);
                    if a.side == Side::T {
                        same.to_vec()
                    } else {
                        same.iter().map(|&(t, s)| (s, t)).collect()
                    }
                };
                all3(pairs.iter().map(|&(x, y)| {
                    self.eq_int(self.alpha_value(v, a, cur, x), self.alpha_value(v, b, cur, y))
                }))
            }
            BExpr::EqOn(tr, pairs) => {
                let i = tr.at(cur);
                self.eq_cells(v, Side::T, i, Side::S, i, pairs)
            }
            BExpr::Pairs(tr, m) => {
                let i = tr.at(cur);
                Some(m[v.loc(Side::S, i)][v.loc(Side::T, i)])
            }
            BExpr::Sigma(tr, table) => {
                let i = tr.at(cur);
                let row = &table[v.loc(Side::T, i)];
                self.eq_cells(v, Side::T, i, Side::S, i, row)
            }
            BExpr::Synced(side) => {
                let l0 = v.loc(*side, 0);
                Some((1..cx.k).all(|i| v.loc(*side, i) == l0))
            }
            BExpr::Truthy(x) => Some(self.int(x, v, cur)?.rem_euclid(cx.domain()) != 0),
            BExpr::Cmp(CmpOp::Eq, a, b) => self.eq_int(self.int(a, v, cur), self.int(b, v, cur)),
            BExpr::Cmp(CmpOp::Ne, a, b) => self.eq_int(self.int(a, v, cur), self.int(b, v, cur)).map(|x| !x),
            BExpr::Cmp(op, a, b) => {
                let a = self.int(a, v, cur)?;
                let b = self.int(b, v, cur)?;
                Some(match op {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    _ => a >= b,
                })
            }
            BExpr::Not(x) => self.eval(x, v, cur).map(|b| !b),
            BExpr::And(xs) => all3(xs.iter().map(|x| self.eval(x, v, cur))),
            BExpr::Or(xs) => any3(xs.iter().map(|x| self.eval(x, v, cur))),
            BExpr::Implies(a, b) => or3(self.eval(a, v, cur).map(|x| !x), || self.eval(b, v, cur)),
            BExpr::Iff(a, b) => Some(self.eval(a, v, cur)? == self.eval(b, v, cur)?),
            BExpr::Ite(c, a, b) => match self.eval(c, v, cur) {
                Some(true) => self.eval(a, v, cur),
                Some(false) => self.eval(b, v, cur),
                None => {
                    let (x, y) = (self.eval(a, v, cur), self.eval(b, v, cur));
                    if x.is_some() && x == y {
                        x
                    } else {
                        None
                    }
                }
            },
            BExpr::All(x) => all3((0..cx.k).map(|i| self.eval(x, v, i))),
            BExpr::Any(x) => any3((0..cx.k).map(|i| self.eval(x, v, i))),
        }
    }
}

impl BExpr {
    /// Flattens nested conjunctions and disjunctions.
    pub fn flatten(self) -> BExpr {
        match self {
            BExpr::And(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    match x.flatten() {
                        BExpr::And(ys) => out.extend(ys),
                        y => out.push(y),
                    }
                }
                BExpr::And(out)
            }
            BExpr::Or(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    match x.flatten() {
                        BExpr::Or(ys) => out.extend(ys),
                        y => out.push(y),
                    }
                }
                BExpr::Or(out)
            }
            BExpr::Not(x) => BExpr::Not(Box::new(x.flatten())),
            BExpr::Implies(a, b) => BExpr::Implies(Box::new(a.flatten()), Box::new(b.flatten())),
            BExpr::Iff(a, b) => BExpr::Iff(Box::new(a.flatten()), Box::new(b.flatten())),
            BExpr::Ite(c, a, b) => BExpr::Ite(Box::new(c.flatten()), Box::new(a.flatten()), Box::new(b.flatten())),
            BExpr::All(x) => BExpr::All(Box::new(x.flatten())),
            BExpr::Any(x) => BExpr::Any(Box::new(x.flatten())),
            other => other,
        }
    }
}

/// A single-track view over two configs, for bisimulation formulas.
pub struct ConfigPair<'a> {
    pub t: &'a Config,
    pub s: &'a Config,
    pub dummy: &'a AState,
}

impl View for ConfigPair<'_> {
    fn aut(&self, _side: Side) -> &AState {
        self.dummy
    }
    fn loc(&self, side: Side, _track: usize) -> usize {
        match side {
            Side::T => self.t.loc,
            Side::S => self.s.loc,
        }
    }
    fn exposed(&self, side: Side, _track: usize) -> bool {
        match side {
            Side::T => self.t.exposed,
            Side::S => self.s.exposed,
        }
    }
    fn cell(&self, side: Side, _track: usize, cell: usize) -> Option<i64> {
        match side {
            Side::T => Some(self.t.alpha[cell]),
            Side::S => Some(self.s.alpha[cell]),
        }
    }
}
