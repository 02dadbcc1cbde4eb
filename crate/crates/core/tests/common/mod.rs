//! Random instances and small reference implementations shared by the
//! integration tests. The reference checks work directly on program steps
//! and automaton transitions, without the product or the acceptors.

#![allow(dead_code)]

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use secwit::automaton::{BundleAutomaton, CmpOp, Guard, Term};
use secwit::secir::{parse_program, AttackModel, Channel, Config, Event, Program};
use secwit::traceops::{EventClass, UPWord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

const VARS: [&str; 3] = ["x", "y", "z"];

fn chan(r: &mut ChaCha8Rng) -> &'static str {
    if r.gen_bool(0.5) { "secret" } else { "public" }
}

fn atom(r: &mut ChaCha8Rng, nvars: usize, d: i64) -> String {
    if r.gen_bool(0.6) {
        VARS[r.gen_range(0..nvars)].to_string()
    } else {
        r.gen_range(0..d).to_string()
    }
}

fn expr(r: &mut ChaCha8Rng, nvars: usize, d: i64) -> String {
    match r.gen_range(0..3) {
        0 => atom(r, nvars, d),
        _ => {
            let op = ["+", "-", "*"].choose(r).unwrap();
            format!("{} {op} {}", atom(r, nvars, d), atom(r, nvars, d))
        }
    }
}

/// Straight-line code over `x, y[, z]`: inputs, assignments and outputs.
/// With `loops`, the last instruction may jump back.
pub fn program_text(r: &mut ChaCha8Rng, d: i64, loops: bool) -> String {
    let nvars = r.gen_range(1..=3);
    let n = r.gen_range(2..=5);
    let mut s = format!("program rnd domain {d}\nvar {}\n", VARS[..nvars].join(", "));
    for i in 1..=n {
        let v = VARS[r.gen_range(0..nvars)];
        let ins = match r.gen_range(0..6) {
            0 | 1 => format!("{v} := input({})", chan(r)),
            2 | 3 => format!("{v} := {}", expr(r, nvars, d)),
            _ => format!("output({}, {})", chan(r), expr(r, nvars, d)),
        };
        s.push_str(&format!("L{i}: {ins}\n"));
    }
    if loops && r.gen_bool(0.5) {
        let back = r.gen_range(1..=n);
        s.push_str(&format!("L{}: if ({}) goto L{back} else goto End\n", n + 1, atom(r, nvars, d)));
    }
    s
}

/// Draws until the text is a valid program (loops may be silent cycles).
pub fn program(r: &mut ChaCha8Rng, d: i64, loops: bool) -> Program {
    loop {
        if let Ok(p) = parse_program(&program_text(r, d, loops)) {
            return p;
        }
    }
}

fn guard(r: &mut ChaCha8Rng, k: usize, depth: usize) -> Guard {
    let i = r.gen_range(0..k);
    let leaf = |r: &mut ChaCha8Rng| match r.gen_range(0..6) {
        0 => Guard::Kind(i, ["input", "output", "eps", "bot"].choose(r).copied().unwrap()),
        1 => Guard::Chan(i, if r.gen_bool(0.5) { Channel::Secret } else { Channel::Public }),
        2 => Guard::Cmp(
            [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt].choose(r).copied().unwrap(),
            Term::Val(i),
            Term::Lit(r.gen_range(0..2)),
        ),
        3 if k > 1 => Guard::Agree(
            0,
            1,
            *[EventClass::Inputs(None), EventClass::Outputs(None), EventClass::All].choose(r).unwrap(),
        ),
        4 => Guard::Cmp(CmpOp::Eq, Term::Val(i), Term::Val(r.gen_range(0..k))),
        _ => Guard::True,
    };
    if depth == 0 {
        return leaf(r);
    }
    match r.gen_range(0..4) {
        0 => Guard::not(guard(r, k, depth - 1)),
        1 => Guard::and(guard(r, k, depth - 1), guard(r, k, depth - 1)),
        2 => Guard::or(guard(r, k, depth - 1), guard(r, k, depth - 1)),
        _ => leaf(r),
    }
}

/// Two or three states, the first initial, at least one accepting.
pub fn automaton(r: &mut ChaCha8Rng, k: usize) -> BundleAutomaton {
    let names = ["a", "b", "c"];
    let n = r.gen_range(2..=3);
    let states: Vec<(&str, bool)> = (0..n).map(|i| (names[i], r.gen_bool(0.4) || i == n - 1)).collect();
    let mut trans = Vec::new();
    for _ in 0..r.gen_range(2..=6) {
        let a = names[r.gen_range(0..n)];
        let b = names[r.gen_range(0..n)];
        trans.push((a, guard(r, k, 2), b));
    }
    // keep some run alive
    trans.push((names[n - 1], Guard::True, names[n - 1]));
    BundleAutomaton::build("rnd", k, &states, &trans)
}

pub fn event(r: &mut ChaCha8Rng) -> Event {
    let val = r.gen_range(0..2);
    match r.gen_range(0..5) {
        0 | 1 => Event::Eps,
        2 => Event::Input { chan: Channel::Secret, val },
        3 => Event::Output { chan: Channel::Public, val },
        _ => Event::Input { chan: Channel::Public, val },
    }
}

/// A word whose loop has at least one non-silent event.
pub fn word(r: &mut ChaCha8Rng) -> UPWord<Event> {
    let stem = (0..r.gen_range(0..=4)).map(|_| event(r)).collect();
    let mut lp: Vec<Event> = (0..r.gen_range(1..=3)).map(|_| event(r)).collect();
    if lp.iter().all(Event::is_eps) {
        let j = r.gen_range(0..lp.len());
        lp[j] = Event::Output { chan: Channel::Public, val: 1 };
    }
    UPWord::new(stem, lp)
}

fn next_pos(pos: usize, stem: usize, len: usize) -> usize {
    if pos + 1 < len { pos + 1 } else { stem }
}

/// Nodes of a finite graph from which an infinite path starts.
fn infinite_from<N: Clone + Eq + std::hash::Hash>(start: N, succ: impl Fn(&N) -> Vec<N>) -> HashSet<N> {
    let mut seen = HashSet::from([start.clone()]);
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        for m in succ(&n) {
            if seen.insert(m.clone()) {
                stack.push(m);
            }
        }
    }
    loop {
        let dead: Vec<N> = seen.iter().filter(|n| !succ(n).iter().any(|m| seen.contains(m))).cloned().collect();
        if dead.is_empty() {
            return seen;
        }
        for n in dead {
            seen.remove(&n);
        }
    }
}

/// Whether `t` is a trace of `p`: some execution emits it letter by letter.
pub fn is_trace(p: &Program, m: &AttackModel, t: &UPWord<Event>) -> bool {
    let (stem, len) = (t.stem.len(), t.stem.len() + t.loop_.len());
    let start = (p.initial_config(), 0usize);
    let succ = |(c, pos): &(Config, usize)| -> Vec<(Config, usize)> {
        p.step(m, c)
            .into_iter()
            .filter(|(e, _)| e == t.at(*pos))
            .map(|(_, c2)| (c2, next_pos(*pos, stem, len)))
            .collect()
    };
    infinite_from(start.clone(), succ).contains(&start)
}

/// Plain Büchi acceptance of an ultimately periodic word by search over
/// (state, position) pairs.
pub fn buchi_accepts(a: &BundleAutomaton, w: &UPWord<Vec<Event>>) -> bool {
    let (stem, len) = (w.stem.len(), w.stem.len() + w.loop_.len());
    let succ = |&(q, pos): &(usize, usize)| -> Vec<(usize, usize)> {
        a.successors(q, w.at(pos)).into_iter().map(|q2| (q2, next_pos(pos, stem, len))).collect()
    };
    let reach = |from: (usize, usize)| {
        let mut seen = HashSet::new();
        let mut stack = succ(&from);
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(succ(&n));
            }
        }
        seen
    };
    let mut all = reach((a.initial, 0));
    all.insert((a.initial, 0));
    all.iter().any(|&n| a.is_accepting(n.0) && reach(n).contains(&n))
}

/// Largest difference between the non-silent event counts of two tracks
/// over `n` positions.
pub fn max_lag(words: &[UPWord<Event>], n: usize) -> usize {
    let mut counts = vec![0usize; words.len()];
    let mut lag = 0;
    for i in 0..n {
        for (c, w) in counts.iter_mut().zip(words) {
            *c += usize::from(!w.at(i).is_eps());
        }
        lag = lag.max(counts.iter().max().unwrap() - counts.iter().min().unwrap());
    }
    lag
}

pub fn all_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| (0..n).map(move |i| {
                let mut t = t.clone();
                t.push(i);
                t
            }))
            .collect();
    }
    out
}
