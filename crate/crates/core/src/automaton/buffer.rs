//! Plain and buffered acceptors. The buffered variant reads ε-interleaved
//! k-vectors and runs the base automaton on the compressed tracks.

use std::fmt;
use std::sync::Arc;

use super::product::ExploreError;
use super::search::{find_accepting_cycle, SearchError};
use super::BundleAutomaton;
use crate::secir::Event;
use crate::traceops::UPWord;

/// Automaton state, with per-track buffers and progress bit when buffered.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AState {
    pub q: usize,
    pub bufs: Vec<Vec<Event>>,
    pub bit: bool,
}

impl AState {
    /// Equality ignoring the progress bit.
    pub fn same_modulo_bit(&self, other: &AState) -> bool {
        self.q == other.q && self.bufs == other.bufs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("buffer bound {bound} exceeded")]
pub struct Overflow {
    pub bound: usize,
}

#[derive(Debug, Clone)]
pub enum Acceptor {
    Plain(Arc<BundleAutomaton>),
    Buffered { base: Arc<BundleAutomaton>, bound: usize },
}

impl Acceptor {
    pub fn plain(a: BundleAutomaton) -> Self {
        Acceptor::Plain(Arc::new(a))
    }

    pub fn buffered(a: BundleAutomaton, bound: usize) -> Self {
        assert!(bound >= 1, "buffer bound must be positive");
        Acceptor::Buffered {
            base: Arc::new(a),
            bound,
        }
    }

    pub fn base(&self) -> &BundleAutomaton {
        match self {
            Acceptor::Plain(a) | Acceptor::Buffered { base: a, .. } => a,
        }
    }

    pub fn k(&self) -> usize {
        self.base().k
    }

    pub fn is_buffered(&self) -> bool {
        matches!(self, Acceptor::Buffered { .. })
    }

    pub fn bound(&self) -> Option<usize> {
        match self {
            Acceptor::Plain(_) => None,
            Acceptor::Buffered { bound, .. } => Some(*bound),
        }
    }

    pub fn initial(&self) -> AState {
        AState {
            q: self.base().initial,
            bufs: if self.is_buffered() {
                vec![Vec::new(); self.k()]
            } else {
                Vec::new()
            },
            bit: false,
        }
    }

    pub fn accepting(&self, s: &AState) -> bool {
        let f = self.base().is_accepting(s.q);
        match self {
            Acceptor::Plain(_) => f,
            Acceptor::Buffered { .. } => f && s.bit,
        }
    }

    /// Successors on one letter. A buffered step appends the non-ε symbols;
    /// if every buffer is then non-empty it consumes one symbol per track
    /// through the base automaton and sets the progress bit.
    pub fn step(&self, s: &AState, v: &[Event]) -> Result<Vec<AState>, Overflow> {
        match self {
            Acceptor::Plain(a) => Ok(a
                .successors(s.q, v)
                .into_iter()
                .map(|q| AState {
                    q,
                    bufs: Vec::new(),
                    bit: false,
                })
                .collect()),
            Acceptor::Buffered { base, bound } => {
                let mut bufs = s.bufs.clone();
                for (b, e) in bufs.iter_mut().zip(v) {
                    if !e.is_eps() {
                        b.push(e.clone());
                    }
                }
                if bufs.iter().any(|b| b.is_empty()) {
                    if bufs.iter().any(|b| b.len() > *bound) {
                        return Err(Overflow { bound: *bound });
                    }
                    return Ok(vec![AState {
                        q: s.q,
                        bufs,
                        bit: false,
                    }]);
                }
                let heads: Vec<Event> = bufs.iter_mut().map(|b| b.remove(0)).collect();
                if bufs.iter().any(|b| b.len() > *bound) {
                    return Err(Overflow { bound: *bound });
                }
                Ok(base
                    .successors(s.q, &heads)
                    .into_iter()
                    .map(|q| AState {
                        q,
                        bufs: bufs.clone(),
                        bit: true,
                    })
                    .collect())
            }
        }
    }

    pub fn show(&self, s: &AState) -> String {
        let name = &self.base().states[s.q];
        if !self.is_buffered() {
            return name.clone();
        }
        let bufs: Vec<String> = s
            .bufs
            .iter()
            .map(|b| {
                let xs: Vec<String> = b.iter().map(|e| e.to_string()).collect();
                format!("[{}]", xs.join(" "))
            })
            .collect();
        format!("{name}{}#{}", bufs.join(""), s.bit as u8)
    }
}

impl fmt::Display for Acceptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Acceptor::Plain(a) => write!(f, "{}", a.name),
            Acceptor::Buffered { base, bound } => write!(f, "{} (buffered, bound {bound})", base.name),
        }
    }
}

/// Büchi acceptance of an ultimately periodic word of k-vectors, via a
/// cycle search in the run graph over (state, word position).
pub fn accepts(a: &Acceptor, w: &UPWord<Vec<Event>>, budget: usize) -> Result<bool, ExploreError> {
    let (s, l) = (w.stem.len(), w.loop_.len());
    let next = |p: usize| if p + 1 < s + l { p + 1 } else { s };
    let r = find_accepting_cycle(
        vec![(a.initial(), 0usize)],
        |(q, p)| {
            let succ = a.step(q, w.at(*p))?;
            Ok::<_, Overflow>(succ.into_iter().map(|q2| ((), (q2, next(*p)))).collect())
        },
        |(q, _)| a.accepting(q),
        budget,
    );
    match r {
        Ok((found, _)) => Ok(found.is_some()),
        Err(SearchError::Budget(n)) => Err(ExploreError::Budget(n)),
        Err(SearchError::Step(o)) => Err(ExploreError::Overflow(o.bound)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::parse_automaton;
    use crate::secir::Channel;
    use crate::traceops::{compress, zip};

    fn out(v: i64) -> Event {
        Event::Output { chan: Channel::Public, val: v }
    }

    fn inf_a() -> BundleAutomaton {
        // accepts words with infinitely many out(1)
        parse_automaton(
            "automaton a tracks 1\nstate p initial\nstate f accepting\n\
             trans p -> f when val(1) = 1\ntrans p -> p when val(1) != 1\n\
             trans f -> f when val(1) = 1\ntrans f -> p when val(1) != 1\n",
        )
        .unwrap()
    }

    #[test]
    fn buffered_matches_compressed_run() {
        let a = inf_a();
        let w = UPWord::new(vec![vec![Event::Eps], vec![out(1)]], vec![vec![Event::Eps], vec![out(1)], vec![Event::Eps]]);
        let b = Acceptor::buffered(a.clone(), 4);
        let c = zip(&[compress(&crate::traceops::unzip(&w)[0]).unwrap()]);
        assert_eq!(c.normalize(), UPWord::new(vec![], vec![vec![out(1)]]));
        assert!(accepts(&b, &w, 10_000).unwrap());
        assert!(accepts(&Acceptor::plain(a.clone()), &c, 10_000).unwrap());
        let w0 = UPWord::new(vec![vec![out(1)]], vec![vec![Event::Eps], vec![out(0)]]);
        assert!(!accepts(&b, &w0, 10_000).unwrap());
    }

    #[test]
    fn eps_free_run_keeps_buffers_empty() {
        let b = Acceptor::buffered(inf_a(), 1);
        let mut s = b.initial();
        for e in [out(1), out(0), out(1)] {
            let next = b.step(&s, &[e]).unwrap();
            assert_eq!(next.len(), 1);
            s = next[0].clone();
            assert!(s.bufs[0].is_empty());
            assert!(s.bit);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let a = parse_automaton("automaton u tracks 2\nstate q initial accepting\ntrans q -> q when true\n").unwrap();
        let b = Acceptor::buffered(a, 2);
        // track 2 stays silent for three steps while track 1 emits
        let w = UPWord::new(
            vec![vec![out(0), Event::Eps]; 3],
            vec![vec![out(0), out(0)]],
        );
        assert_eq!(accepts(&b, &w, 10_000), Err(ExploreError::Overflow(2)));
        let b3 = Acceptor::buffered(b.base().clone(), 3);
        assert_eq!(accepts(&b3, &w, 10_000), Ok(true));
    }
}
