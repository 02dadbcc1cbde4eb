//! Explicit-state witness checkers: refinement relations, bisimulations,
//! refinement relative to a bisimulation, and input determinism.
//!
//! Related pairs range over every reachable product skeleton (automaton
//! state plus per-track location and exposure flag) combined with every
//! memory valuation, so a witness must be inductive on its own and cannot
//! lean on facts that merely happen to hold in reachable memories.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::{joint_steps, AState, Acceptor, BundleAutomaton, ExploreError, ProductError, ProductState, ProductSystem};
use crate::props::Property;
use crate::secir::{AttackModel, Config, Event, Program};
use crate::traceops::EventClass;
use crate::witness::compile::{BExpr, ConfigPair, Ctx, Eval, FullView, IExpr, PartialView};
use crate::witness::{PExpr, Side, StutterSide, Witness, WitnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Valid,
    Invalid,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Valid => 0,
            Status::Invalid => 1,
            Status::Inconclusive => 2,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Valid => "valid",
            Status::Invalid => "invalid",
            Status::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Clause {
    Init,
    A,
    B,
    C,
    D,
    Rank,
    Bisim1,
    Bisim2,
    Bisim3,
}

impl Clause {
    pub fn name(self) -> &'static str {
        match self {
            Clause::Init => "init",
            Clause::A => "2a",
            Clause::B => "2b",
            Clause::C => "2c",
            Clause::D => "2d",
            Clause::Rank => "rank",
            Clause::Bisim1 => "bisim-1",
            Clause::Bisim2 => "bisim-2",
            Clause::Bisim3 => "bisim-3",
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Clause {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// An offending related pair. For bisimulation clauses the states carry a
/// single track and a placeholder automaton state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub clause: Clause,
    pub target: ProductState,
    pub source: ProductState,
    /// The unmatched step: letter and successor, on the target side for
    /// clauses 2a-2d and bisim-2, on the source side for bisim-3.
    pub step: Option<(Vec<Event>, ProductState)>,
    pub shown: CexText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CexText {
    pub target: String,
    pub source: String,
    pub letter: Option<String>,
    pub successor: Option<String>,
}

impl Serialize for Counterexample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Counterexample", 5)?;
        st.serialize_field("clause", &self.clause)?;
        st.serialize_field("target", &self.shown.target)?;
        st.serialize_field("source", &self.shown.source)?;
        st.serialize_field("letter", &self.shown.letter)?;
        st.serialize_field("successor", &self.shown.successor)?;
        st.end()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub target_states: usize,
    pub source_states: usize,
    pub pairs: usize,
    #[serde(skip)]
    pub millis: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub counterexample: Option<Counterexample>,
    pub reason: Option<String>,
    pub stats: Stats,
}

impl Verdict {
    fn valid(stats: Stats) -> Self {
        Verdict {
            status: Status::Valid,
            counterexample: None,
            reason: None,
            stats,
        }
    }

    fn invalid(cex: Counterexample, stats: Stats) -> Self {
        Verdict {
            status: Status::Invalid,
            reason: Some(format!("clause {} violated", cex.clause)),
            counterexample: Some(cex),
            stats,
        }
    }

    fn inconclusive(e: ExploreError, stats: Stats) -> Self {
        Verdict {
            status: Status::Inconclusive,
            counterexample: None,
            reason: Some(e.to_string()),
            stats,
        }
    }

    pub fn clause(&self) -> Option<Clause> {
        self.counterexample.as_ref().map(|c| c.clause)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Witness(#[from] WitnessError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error("programs have different domains ({0} and {1})")]
    Domain(i64, i64),
    #[error("witness has no bisimulation formula")]
    NoBisim,
}

pub const DEFAULT_BUDGET: usize = 2_000_000;

fn not_in(class: &EventClass, v: &[Event]) -> bool {
    v.iter().all(|e| !class.contains(e))
}

fn agree(class: &EventClass, u: &[Event], v: &[Event]) -> bool {
    u.iter().zip(v).all(|(a, b)| class.agree(a, b))
}

fn letter_text(v: &[Event]) -> String {
    let xs: Vec<String> = v.iter().map(|e| e.to_string()).collect();
    format!("[{}]", xs.join(", "))
}

/// All reachable states of a product, or the first exploration error.
fn reachable(ps: &ProductSystem, budget: usize) -> Result<Vec<ProductState>, ExploreError> {
    let init = ps.initial();
    let mut seen = HashSet::from([init.clone()]);
    let mut order = vec![init.clone()];
    let mut queue = VecDeque::from([init]);
    while let Some(s) = queue.pop_front() {
        for (_, s2) in ps.successors(&s)? {
            if seen.insert(s2.clone()) {
                if seen.len() > budget {
                    return Err(ExploreError::Budget(budget));
                }
                order.push(s2.clone());
                queue.push_back(s2);
            }
        }
    }
    Ok(order)
}

type Skeleton = (AState, Vec<(usize, bool)>);

fn skeletons(states: &[ProductState]) -> Vec<Skeleton> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in states {
        let sk: Skeleton = (s.a.clone(), s.cfgs.iter().map(|c| (c.loc, c.exposed)).collect());
        if seen.insert(sk.clone()) {
            out.push(sk);
        }
    }
    out
}

enum Mode {
    Universal,
    /// Refinement relative to a bisimulation: the step search ranges over
    /// all source program steps whose successors stay pointwise in B.
    Relative { b: BExpr },
}

/// A compiled refinement witness bound to an acceptor and two programs.
pub struct Checker<'a> {
    cx: Ctx<'a>,
    tps: ProductSystem<'a>,
    sps: ProductSystem<'a>,
    r: BExpr,
    /// R, conjoined with B on every track in relative mode.
    filter: BExpr,
    stutter: Option<(StutterSide, IExpr, i64)>,
    inputs: EventClass,
    mode: Mode,
}

impl<'a> Checker<'a> {
    pub fn new(
        acceptor: &'a Acceptor,
        s: &'a Program,
        t: &'a Program,
        m: &'a AttackModel,
        w: &Witness,
    ) -> Result<Self, CheckError> {
        if s.domain != t.domain {
            return Err(CheckError::Domain(s.domain, t.domain));
        }
        let tps = ProductSystem::new(acceptor, t, m)?;
        let sps = ProductSystem::new(acceptor, s, m)?;
        let cx = Ctx::new(s, t, Some(acceptor), acceptor.k());
        let r = cx.compile_bool(&w.r)?.flatten();
        let stutter = match &w.stutter {
            Some(st) => Some((st.side, cx.compile_int(&st.rank)?, st.bound)),
            None => None,
        };
        Ok(Checker {
            cx,
            tps,
            sps,
            filter: r.clone(),
            r,
            stutter,
            inputs: w.inputs.clone(),
            mode: Mode::Universal,
        })
    }

    /// Switches to refinement relative to the witness's bisimulation.
    pub fn relative(mut self, w: &Witness) -> Result<Self, CheckError> {
        let b = w.bisim.as_ref().ok_or(CheckError::NoBisim)?;
        let b = self.cx.compile_bool(b)?.flatten();
        let lifted = BExpr::All(Box::new(b.clone()));
        self.filter = BExpr::And(vec![self.r.clone(), lifted]).flatten();
        self.mode = Mode::Relative { b };
        Ok(self)
    }

    fn ev(&self) -> Eval<'_, 'a> {
        Eval { cx: &self.cx }
    }

    pub fn related(&self, x: &ProductState, y: &ProductState) -> bool {
        self.ev().eval(&self.filter, &FullView { t: x, s: y }, 0) == Some(true)
    }

    fn r_holds(&self, x: &ProductState, y: &ProductState) -> bool {
        self.ev().eval(&self.r, &FullView { t: x, s: y }, 0) == Some(true)
    }

    fn rank(&self, x: &ProductState, y: &ProductState) -> Option<i64> {
        let (_, e, _) = self.stutter.as_ref()?;
        self.ev().int(e, &FullView { t: x, s: y }, 0)
    }

    fn cex(
        &self,
        clause: Clause,
        x: &ProductState,
        y: &ProductState,
        step: Option<(Vec<Event>, ProductState)>,
    ) -> Counterexample {
        let shown = CexText {
            target: self.tps.show(x),
            source: self.sps.show(y),
            letter: step.as_ref().map(|(v, _)| letter_text(v)),
            successor: step.as_ref().map(|(_, x2)| self.tps.show(x2)),
        };
        Counterexample {
            clause,
            target: x.clone(),
            source: y.clone(),
            step,
            shown,
        }
    }

    /// Searches a source move matching the target step `x -v-> x2`.
    /// When none matches, returns the first clause that the most promising
    /// candidate fails.
    fn match_step(
        &self,
        x: &ProductState,
        y: &ProductState,
        v: &[Event],
        x2: &ProductState,
    ) -> Result<Option<Clause>, ExploreError> {
        let acc_t = self.tps.accepting(x2);
        let mut furthest = Clause::A;
        match &self.mode {
            Mode::Universal => {
                for (u, y2) in self.sps.successors(y)? {
                    furthest = furthest.max(Clause::B);
                    if !agree(&self.inputs, &u, v) {
                        continue;
                    }
                    furthest = furthest.max(Clause::C);
                    if !self.r_holds(x2, &y2) {
                        continue;
                    }
                    furthest = furthest.max(Clause::D);
                    if acc_t && !self.sps.accepting(&y2) {
                        continue;
                    }
                    return Ok(None);
                }
            }
            Mode::Relative { b } => {
                // every B-respecting input-equivalent source step must extend
                let ev = self.ev();
                for (u, cfgs) in joint_steps(self.sps.program, self.sps.model, &y.cfgs) {
                    if !agree(&self.inputs, &u, v) {
                        continue;
                    }
                    let probe = ProductState {
                        a: y.a.clone(),
                        cfgs: cfgs.clone(),
                    };
                    let view = FullView { t: x2, s: &probe };
                    if !(0..self.cx.k).all(|i| ev.eval(b, &view, i) == Some(true)) {
                        continue;
                    }
                    let mut best = Clause::A;
                    let mut ok = false;
                    for a in self.cx.acceptor.expect("refinement has an acceptor").step(&y.a, &u)? {
                        let y2 = ProductState { a, cfgs: cfgs.clone() };
                        if !self.r_holds(x2, &y2) {
                            continue;
                        }
                        best = best.max(Clause::C);
                        if acc_t && !self.sps.accepting(&y2) {
                            continue;
                        }
                        ok = true;
                        break;
                    }
                    if !ok {
                        // no successor at all is 2a; some successor but none in R is 2c
                        let any = !self.cx.acceptor.expect("acceptor").step(&y.a, &u)?.is_empty();
                        return Ok(Some(match best {
                            Clause::A if any => Clause::C,
                            Clause::C => Clause::D,
                            other => other,
                        }));
                    }
                }
                return Ok(None);
            }
        }
        if let Some((side, _, _)) = &self.stutter {
            if side.source_stays()
                && not_in(&self.inputs, v)
                && self.r_holds(x2, y)
                && (!acc_t || self.sps.accepting(y))
                && self.rank(x2, y) < self.rank(x, y)
            {
                return Ok(None);
            }
        }
        Ok(Some(furthest))
    }

    /// Clause 2 (and the rank bound) for one related pair.
    pub fn check_pair(&self, x: &ProductState, y: &ProductState) -> Result<Option<Counterexample>, ExploreError> {
        let r0 = match &self.stutter {
            Some((_, _, bound)) => match self.rank(x, y) {
                Some(r) if (0..=*bound).contains(&r) => Some(r),
                _ => return Ok(Some(self.cex(Clause::Rank, x, y, None))),
            },
            None => None,
        };
        let mut failure = None;
        for (v, x2) in self.tps.successors(x)? {
            if let Some(clause) = self.match_step(x, y, &v, &x2)? {
                failure = Some(self.cex(clause, x, y, Some((v, x2))));
                break;
            }
        }
        let Some(failure) = failure else {
            return Ok(None);
        };
        if let Some((side, _, _)) = &self.stutter {
            if side.target_stays() && matches!(self.mode, Mode::Universal) {
                for (u, y2) in self.sps.successors(y)? {
                    if not_in(&self.inputs, &u)
                        && self.r_holds(x, &y2)
                        && self.rank(x, &y2).is_some_and(|r| Some(r) < r0)
                        && self.check_pair(x, &y2)?.is_none()
                    {
                        return Ok(None);
                    }
                }
            }
        }
        Ok(Some(failure))
    }

    /// Re-evaluates a counterexample on its own pair.
    pub fn recheck(&self, c: &Counterexample) -> bool {
        match c.clause {
            Clause::Init => !self.related(&c.target, &c.source),
            Clause::Rank => {
                let bound = self.stutter.as_ref().map_or(0, |s| s.2);
                !self.rank(&c.target, &c.source).is_some_and(|r| (0..=bound).contains(&r))
            }
            Clause::A | Clause::B | Clause::C | Clause::D => {
                let Some((v, x2)) = &c.step else { return false };
                let is_step = self
                    .tps
                    .successors(&c.target)
                    .is_ok_and(|s| s.iter().any(|(w, z)| w == v && z == x2));
                is_step
                    && self.related(&c.target, &c.source)
                    && self.match_step(&c.target, &c.source, v, x2) == Ok(Some(c.clause))
            }
            _ => false,
        }
    }

    pub fn check(&self, budget: usize) -> Verdict {
        let start = Instant::now();
        let mut stats = Stats::default();
        let x0 = self.tps.initial();
        let y0 = self.sps.initial();
        if !self.related(&x0, &y0) {
            stats.millis = start.elapsed().as_millis();
            return Verdict::invalid(self.cex(Clause::Init, &x0, &y0, None), stats);
        }
        let (tstates, sstates) = match (reachable(&self.tps, budget), reachable(&self.sps, budget)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return Verdict::inconclusive(e, stats),
        };
        stats.target_states = tstates.len();
        stats.source_states = sstates.len();
        let tsk = skeletons(&tstates);
        let ssk = skeletons(&sstates);
        let jobs: Vec<(usize, usize)> = (0..tsk.len())
            .flat_map(|i| (0..ssk.len()).map(move |j| (i, j)))
            .collect();
        let pairs = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let outcome = jobs.par_iter().find_map_first(|&(i, j)| {
            if stop.load(Ordering::Relaxed) {
                return None;
            }
            match self.scan(&tsk[i], &ssk[j], &pairs, budget) {
                Ok(None) => None,
                Ok(Some(c)) => Some(Ok(c)),
                Err(e) => {
                    stop.store(true, Ordering::Relaxed);
                    Some(Err(e))
                }
            }
        });
        stats.pairs = pairs.load(Ordering::Relaxed);
        stats.millis = start.elapsed().as_millis();
        match outcome {
            None => Verdict::valid(stats),
            Some(Ok(c)) => Verdict::invalid(c, stats),
            Some(Err(e)) => Verdict::inconclusive(e, stats),
        }
    }

    /// Enumerates the memories completing a skeleton pair to a related
    /// pair, pruning with three-valued evaluation, and checks each one.
    fn scan(
        &self,
        tsk: &Skeleton,
        ssk: &Skeleton,
        pairs: &AtomicUsize,
        budget: usize,
    ) -> Result<Option<Counterexample>, ExploreError> {
        let k = self.cx.k;
        let (tn, sn) = (self.cx.t.num_cells(), self.cx.s.num_cells());
        let mut tcells = vec![None; k * tn];
        let mut scells = vec![None; k * sn];
        // interleave same-named cells so that equalities prune early
        let mut order: Vec<(Side, usize)> = Vec::new();
        let mut s_done = vec![false; sn];
        for c in 0..tn {
            for i in 0..k {
                order.push((Side::T, i * tn + c));
            }
            if let Some(d) = self.cx.s.cell_index(&self.cx.t.cell_names[c]) {
                s_done[d] = true;
                for i in 0..k {
                    order.push((Side::S, i * sn + d));
                }
            }
        }
        for d in 0..sn {
            if !s_done[d] {
                for i in 0..k {
                    order.push((Side::S, i * sn + d));
                }
            }
        }
        let mut st = ScanState {
            tcells: &mut tcells,
            scells: &mut scells,
        };
        self.descend(tsk, ssk, &order, 0, &mut st, pairs, budget)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        tsk: &Skeleton,
        ssk: &Skeleton,
        order: &[(Side, usize)],
        depth: usize,
        st: &mut ScanState,
        pairs: &AtomicUsize,
        budget: usize,
    ) -> Result<Option<Counterexample>, ExploreError> {
        let (tn, sn) = (self.cx.t.num_cells(), self.cx.s.num_cells());
        let verdict = {
            let view = PartialView {
                tq: &tsk.0,
                sq: &ssk.0,
                tskel: &tsk.1,
                sskel: &ssk.1,
                tcells: st.tcells,
                scells: st.scells,
                tn,
                sn,
            };
            self.ev().eval(&self.filter, &view, 0)
        };
        if verdict == Some(false) {
            return Ok(None);
        }
        if depth == order.len() {
            if pairs.fetch_add(1, Ordering::Relaxed) >= budget {
                return Err(ExploreError::Budget(budget));
            }
            let build = |sk: &Skeleton, cells: &[Option<i64>], n: usize| ProductState {
                a: sk.0.clone(),
                cfgs: sk
                    .1
                    .iter()
                    .enumerate()
                    .map(|(i, &(loc, exposed))| Config {
                        alpha: cells[i * n..(i + 1) * n].iter().map(|c| c.expect("assigned")).collect(),
                        loc,
                        exposed,
                    })
                    .collect(),
            };
            let x = build(tsk, st.tcells, tn);
            let y = build(ssk, st.scells, sn);
            return self.check_pair(&x, &y);
        }
        let (side, slot) = order[depth];
        for v in 0..self.cx.domain() {
            match side {
                Side::T => st.tcells[slot] = Some(v),
                Side::S => st.scells[slot] = Some(v),
            }
            if let Some(c) = self.descend(tsk, ssk, order, depth + 1, st, pairs, budget)? {
                match side {
                    Side::T => st.tcells[slot] = None,
                    Side::S => st.scells[slot] = None,
                }
                return Ok(Some(c));
            }
        }
        match side {
            Side::T => st.tcells[slot] = None,
            Side::S => st.scells[slot] = None,
        }
        Ok(None)
    }
}

struct ScanState<'x> {
    tcells: &'x mut [Option<i64>],
    scells: &'x mut [Option<i64>],
}

/// Refinement check of `w.r` for the acceptor.
pub fn check_refinement(
    a: &Acceptor,
    s: &Program,
    t: &Program,
    m: &AttackModel,
    w: &Witness,
    budget: usize,
) -> Result<Verdict, CheckError> {
    Ok(Checker::new(a, s, t, m, w)?.check(budget))
}

/// Refinement relative to the witness's bisimulation; the bisimulation
/// itself is checked first.
pub fn check_relative_refinement(
    a: &Acceptor,
    s: &Program,
    t: &Program,
    m: &AttackModel,
    w: &Witness,
    budget: usize,
) -> Result<Verdict, CheckError> {
    let b = w.bisim.as_ref().ok_or(CheckError::NoBisim)?;
    let bv = check_bisimulation(s, t, m, b, &w.inputs, w.stutter.as_ref().map(|s| (&s.rank, s.bound)), budget)?;
    if bv.status != Status::Valid {
        return Ok(bv);
    }
    Ok(Checker::new(a, s, t, m, w)?.relative(w)?.check(budget))
}

/// Acceptor for one violation automaton: buffered when either program can
/// take silent steps under the model, so tracks may drift apart.
pub fn acceptor_for(a: &BundleAutomaton, s: &Program, t: &Program, m: &AttackModel, bound: usize) -> Acceptor {
    if s.has_silent_steps(m) || t.has_silent_steps(m) {
        Acceptor::buffered(a.clone(), bound)
    } else {
        Acceptor::plain(a.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AutomatonVerdict {
    pub automaton: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Checks the witness against every automaton of the property. Invalid
/// wins over inconclusive, which wins over valid.
pub fn check_property(
    prop: &Property,
    s: &Program,
    t: &Program,
    w: &Witness,
    bound: usize,
    relative: bool,
    budget: usize,
) -> Result<(Status, Vec<AutomatonVerdict>), CheckError> {
    let mut out = Vec::new();
    for a in &prop.automata {
        let acc = acceptor_for(a, s, t, &prop.model, bound);
        let v = if relative {
            check_relative_refinement(&acc, s, t, &prop.model, w, budget)?
        } else {
            check_refinement(&acc, s, t, &prop.model, w, budget)?
        };
        out.push(AutomatonVerdict {
            automaton: a.name.clone(),
            verdict: v,
        });
    }
    let worst = |st: Status| out.iter().any(|v| v.verdict.status == st);
    let status = if worst(Status::Invalid) {
        Status::Invalid
    } else if worst(Status::Inconclusive) {
        Status::Inconclusive
    } else {
        Status::Valid
    };
    Ok((status, out))
}

/// Single-track bisimulation checker over pairs reachable from the
/// initial pair through matching steps.
pub struct BisimChecker<'a> {
    cx: Ctx<'a>,
    m: &'a AttackModel,
    b: BExpr,
    inputs: EventClass,
    rank: Option<(IExpr, i64)>,
    dummy: AState,
}

impl<'a> BisimChecker<'a> {
    pub fn new(
        s: &'a Program,
        t: &'a Program,
        m: &'a AttackModel,
        b: &PExpr,
        inputs: &EventClass,
        stutter: Option<(&PExpr, i64)>,
    ) -> Result<Self, CheckError> {
        if s.domain != t.domain {
            return Err(CheckError::Domain(s.domain, t.domain));
        }
        let cx = Ctx::new(s, t, None, 1);
        let b = cx.compile_bool(b)?.flatten();
        let rank = match stutter {
            Some((e, bound)) => Some((cx.compile_int(e)?, bound)),
            None => None,
        };
        Ok(BisimChecker {
            cx,
            m,
            b,
            inputs: inputs.clone(),
            rank,
            dummy: AState {
                q: 0,
                bufs: Vec::new(),
                bit: false,
            },
        })
    }

    fn view<'v>(&'v self, t: &'v Config, s: &'v Config) -> ConfigPair<'v> {
        ConfigPair { t, s, dummy: &self.dummy }
    }

    pub fn related(&self, t: &Config, s: &Config) -> bool {
        Eval { cx: &self.cx }.eval(&self.b, &self.view(t, s), 0) == Some(true)
    }

    fn rank(&self, t: &Config, s: &Config) -> Option<i64> {
        let (e, _) = self.rank.as_ref()?;
        Eval { cx: &self.cx }.int(e, &self.view(t, s), 0)
    }

    fn wrap(&self, c: &Config) -> ProductState {
        ProductState {
            a: self.dummy.clone(),
            cfgs: vec![c.clone()],
        }
    }

    fn cex(&self, clause: Clause, t: &Config, s: &Config, step: Option<(Event, Config, Side)>) -> Counterexample {
        let (letter, successor) = match &step {
            Some((e, c, Side::T)) => (Some(e.to_string()), Some(self.cx.t.show_config(c))),
            Some((e, c, Side::S)) => (Some(e.to_string()), Some(self.cx.s.show_config(c))),
            None => (None, None),
        };
        Counterexample {
            clause,
            target: self.wrap(t),
            source: self.wrap(s),
            step: step.map(|(e, c, _)| (vec![e], self.wrap(&c))),
            shown: CexText {
                target: self.cx.t.show_config(t),
                source: self.cx.s.show_config(s),
                letter,
                successor,
            },
        }
    }

    /// Matched successor pairs of one related pair, or the violated clause.
    pub fn step_pair(&self, t: &Config, s: &Config) -> Result<Vec<(Config, Config)>, Counterexample> {
        let tsteps = self.cx.t.step(self.m, t);
        let ssteps = self.cx.s.step(self.m, s);
        let r0 = self.rank(t, s);
        if let Some((_, bound)) = &self.rank {
            if !r0.is_some_and(|r| (0..=*bound).contains(&r)) {
                return Err(self.cex(Clause::Rank, t, s, None));
            }
        }
        let mut out = Vec::new();
        for (v, t2) in &tsteps {
            let before = out.len();
            for (u, s2) in &ssteps {
                if self.inputs.agree(u, v) && self.related(t2, s2) {
                    out.push((t2.clone(), s2.clone()));
                }
            }
            if out.len() == before {
                if self.rank.is_some()
                    && !self.inputs.contains(v)
                    && self.related(t2, s)
                    && self.rank(t2, s) < r0
                {
                    out.push((t2.clone(), s.clone()));
                    continue;
                }
                return Err(self.cex(Clause::Bisim2, t, s, Some((v.clone(), t2.clone(), Side::T))));
            }
        }
        for (u, s2) in &ssteps {
            let matched = tsteps
                .iter()
                .any(|(v, t2)| self.inputs.agree(u, v) && self.related(t2, s2));
            if matched {
                continue;
            }
            if self.rank.is_some() && !self.inputs.contains(u) && self.related(t, s2) && self.rank(t, s2) < r0 {
                out.push((t.clone(), s2.clone()));
                continue;
            }
            return Err(self.cex(Clause::Bisim3, t, s, Some((u.clone(), s2.clone(), Side::S))));
        }
        Ok(out)
    }

    pub fn check(&self, budget: usize) -> Verdict {
        let start = Instant::now();
        let mut stats = Stats::default();
        let t0 = self.cx.t.initial_config();
        let s0 = self.cx.s.initial_config();
        if !self.related(&t0, &s0) {
            return Verdict::invalid(self.cex(Clause::Bisim1, &t0, &s0, None), stats);
        }
        let mut seen = HashSet::from([(t0.clone(), s0.clone())]);
        let mut queue = VecDeque::from([(t0, s0)]);
        while let Some((t, s)) = queue.pop_front() {
            match self.step_pair(&t, &s) {
                Ok(next) => {
                    for p in next {
                        if seen.insert(p.clone()) {
                            if seen.len() > budget {
                                stats.pairs = seen.len();
                                return Verdict::inconclusive(ExploreError::Budget(budget), stats);
                            }
                            queue.push_back(p);
                        }
                    }
                }
                Err(c) => {
                    stats.pairs = seen.len();
                    stats.millis = start.elapsed().as_millis();
                    return Verdict::invalid(c, stats);
                }
            }
        }
        stats.pairs = seen.len();
        stats.millis = start.elapsed().as_millis();
        Verdict::valid(stats)
    }

    pub fn recheck(&self, c: &Counterexample) -> bool {
        let (t, s) = (&c.target.cfgs[0], &c.source.cfgs[0]);
        match c.clause {
            Clause::Bisim1 => {
                !self.related(t, s) && *t == self.cx.t.initial_config() && *s == self.cx.s.initial_config()
            }
            Clause::Bisim2 | Clause::Bisim3 | Clause::Rank => {
                self.related(t, s) && matches!(self.step_pair(t, s), Err(d) if d.clause == c.clause)
            }
            _ => false,
        }
    }
}

pub fn check_bisimulation(
    s: &Program,
    t: &Program,
    m: &AttackModel,
    b: &PExpr,
    inputs: &EventClass,
    stutter: Option<(&PExpr, i64)>,
    budget: usize,
) -> Result<Verdict, CheckError> {
    Ok(BisimChecker::new(s, t, m, b, inputs, stutter)?.check(budget))
}

/// Non-silent events reachable through silent steps, with their targets.
fn visible(p: &Program, m: &AttackModel, c: &Config) -> Vec<(Event, Config)> {
    let mut out = Vec::new();
    let mut seen = HashSet::from([c.clone()]);
    let mut stack = vec![c.clone()];
    while let Some(c) = stack.pop() {
        for (e, c2) in p.step(m, &c) {
            if e.is_eps() {
                if seen.insert(c2.clone()) {
                    stack.push(c2);
                }
            } else {
                out.push((e, c2));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Whether any two executions reading the same inputs make the same
/// observations. Explores the self-product of observable steps.
pub fn check_input_deterministic(p: &Program, m: &AttackModel, budget: usize) -> Result<bool, ExploreError> {
    let c0 = p.initial_config();
    let mut cache: HashMap<Config, Vec<(Event, Config)>> = HashMap::new();
    let mut seen = HashSet::from([(c0.clone(), c0.clone())]);
    let mut queue = VecDeque::from([(c0.clone(), c0)]);
    while let Some((a, b)) = queue.pop_front() {
        for c in [&a, &b] {
            if !cache.contains_key(c) {
                cache.insert(c.clone(), visible(p, m, c));
            }
        }
        for (e1, a2) in &cache[&a] {
            for (e2, b2) in &cache[&b] {
                let continue_with = match (e1, e2) {
                    (Event::Input { chan: c1, val: v1 }, Event::Input { chan: c2, val: v2 }) if c1 == c2 => {
                        v1 == v2
                    }
                    _ if e1 == e2 => true,
                    _ => return Ok(false),
                };
                if continue_with && seen.insert((a2.clone(), b2.clone())) {
                    if seen.len() > budget {
                        return Err(ExploreError::Budget(budget));
                    }
                    queue.push_back((a2.clone(), b2.clone()));
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::props::final_memory_equal;
    use crate::secir::parse_program;
    use crate::witness::parse_witness;

    const S: &str = "program fold domain 4\nvar x, y, z\n\
        L1: x := input(secret)\nL2: y := 42\nL3: z := y - 41\nL4: x := x * (z - 1)\n";
    const T: &str = "program fold domain 4\nvar x, y, z\n\
        L1: x := input(secret)\nL2: y := 42\nL3: z := 1\nL4: x := 0\n";
    const W: &str = "witness for fme {\n  R: qT = qS && t = s && alltracks((T.loc = L3 -> T.y = 42) && \
        (T.loc = L4 -> T.z = 1) && (T.loc = End -> T.x = 0));\n  I: inputs;\n  bisim: t = s && (T.loc = L3 -> T.y = 42) && \
        (T.loc = L4 -> T.z = 1) && (T.loc = End -> T.x = 0);\n}\n";

    fn setup() -> (Program, Program, AttackModel, Acceptor) {
        (
            parse_program(S).unwrap(),
            parse_program(T).unwrap(),
            AttackModel::final_memory(),
            Acceptor::buffered(final_memory_equal(&["x", "y", "z"]), 2),
        )
    }

    #[test]
    fn folding_validates() {
        let (s, t, m, a) = setup();
        let w = parse_witness(W).unwrap();
        let v = check_refinement(&a, &s, &t, &m, &w, DEFAULT_BUDGET).unwrap();
        assert_eq!(v.status, Status::Valid, "{v:?}");
    }

    #[test]
    fn weakened_folding_fails_at_l3() {
        let (s, t, m, a) = setup();
        let mut w = parse_witness(W).unwrap();
        w.r = PExpr::state_equality();
        let c = Checker::new(&a, &s, &t, &m, &w).unwrap();
        let v = c.check(DEFAULT_BUDGET);
        assert_eq!(v.clause(), Some(Clause::C), "{v:?}");
        let cex = v.counterexample.unwrap();
        assert!(cex.shown.target.contains("L3"), "{:?}", cex.shown);
        assert!(c.recheck(&cex));
    }

    #[test]
    fn folding_bisim_and_relative() {
        let (s, t, m, a) = setup();
        let w = parse_witness(W).unwrap();
        let v = check_relative_refinement(&a, &s, &t, &m, &w, DEFAULT_BUDGET).unwrap();
        assert_eq!(v.status, Status::Valid, "{v:?}");
    }

    #[test]
    fn input_determinism() {
        let (s, _, m, _) = setup();
        assert!(check_input_deterministic(&s, &m, 10_000).unwrap());
        let p = parse_program("program c domain 2\nvar x\nL1: choose { x := 0 } | { x := 1 }\nL2: output(public, x)\n").unwrap();
        assert!(!check_input_deterministic(&p, &AttackModel::io(), 10_000).unwrap());
    }
}
