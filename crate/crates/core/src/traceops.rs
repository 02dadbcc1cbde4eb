//! Operations on ultimately periodic words: agreement, projection,
//! compression, zip and unzip.

use std::fmt;

use serde::Serialize;

use crate::secir::{Channel, Event, Ext};

/// The infinite word `stem · loop^ω`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct UPWord<T> {
    pub stem: Vec<T>,
    #[serde(rename = "loop")]
    pub loop_: Vec<T>,
}

impl<T: Clone + Eq> UPWord<T> {
    pub fn new(stem: Vec<T>, loop_: Vec<T>) -> Self {
        assert!(!loop_.is_empty(), "ultimately periodic word needs a non-empty loop");
        UPWord { stem, loop_ }
    }

    pub fn at(&self, i: usize) -> &T {
        if i < self.stem.len() {
            &self.stem[i]
        } else {
            &self.loop_[(i - self.stem.len()) % self.loop_.len()]
        }
    }

    pub fn prefix(&self, n: usize) -> Vec<T> {
        (0..n).map(|i| self.at(i).clone()).collect()
    }

    /// Shortest loop, then shortest stem.
    pub fn normalize(&self) -> Self {
        let n = self.loop_.len();
        let period = (1..=n)
            .find(|p| n % p == 0 && (0..n).all(|i| self.loop_[i] == self.loop_[i % p]))
            .unwrap_or(n);
        let mut stem = self.stem.clone();
        let mut loop_: Vec<T> = self.loop_[..period].to_vec();
        while let Some(last) = stem.last() {
            if *last != loop_[period - 1] {
                break;
            }
            stem.pop();
            loop_.rotate_right(1);
        }
        UPWord { stem, loop_ }
    }

    /// Equality of the denoted infinite words.
    pub fn same_word(&self, other: &Self) -> bool {
        self.normalize() == other.normalize()
    }

    pub fn map<U: Clone + Eq>(&self, f: impl Fn(&T) -> U) -> UPWord<U> {
        UPWord {
            stem: self.stem.iter().map(&f).collect(),
            loop_: self.loop_.iter().map(&f).collect(),
        }
    }
}

impl<T: fmt::Display> fmt::Display for UPWord<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[T]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        write!(f, "[{}] ([{}])^w", join(&self.stem), join(&self.loop_))
    }
}

/// Result of projecting an infinite word: finite when the loop has no
/// member of the class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projected<T> {
    Finite(Vec<T>),
    Infinite(UPWord<T>),
}

impl<T: Clone + Eq> Projected<T> {
    pub fn same_word(&self, other: &Self) -> bool {
        match (self, other) {
            (Projected::Finite(a), Projected::Finite(b)) => a == b,
            (Projected::Infinite(a), Projected::Infinite(b)) => a.same_word(b),
            _ => false,
        }
    }
}

pub fn project<T: Clone + Eq>(u: &UPWord<T>, gamma: impl Fn(&T) -> bool) -> Projected<T> {
    let stem: Vec<T> = u.stem.iter().filter(|x| gamma(x)).cloned().collect();
    let loop_: Vec<T> = u.loop_.iter().filter(|x| gamma(x)).cloned().collect();
    if loop_.is_empty() {
        Projected::Finite(stem)
    } else {
        Projected::Infinite(UPWord { stem, loop_ })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("silent divergence: loop contains only eps")]
pub struct SilentDivergence;

pub fn compress(u: &UPWord<Event>) -> Result<UPWord<Event>, SilentDivergence> {
    match project(u, |e| !e.is_eps()) {
        Projected::Infinite(w) => Ok(w),
        Projected::Finite(_) => Err(SilentDivergence),
    }
}

/// `x` and `y` agree on `gamma`: both outside, or both inside and equal.
pub fn agree_on<T: PartialEq>(a: &T, b: &T, gamma: impl Fn(&T) -> bool) -> bool {
    match (gamma(a), gamma(b)) {
        (false, false) => true,
        (true, true) => a == b,
        _ => false,
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Pointwise k-vector word; stems padded to the longest stem, loops
/// unrolled to the lcm of the loop lengths.
pub fn zip<T: Clone + Eq>(words: &[UPWord<T>]) -> UPWord<Vec<T>> {
    let s = words.iter().map(|w| w.stem.len()).max().unwrap_or(0);
    let l = words.iter().fold(1, |acc, w| acc / gcd(acc, w.loop_.len()) * w.loop_.len());
    let col = |i: usize| words.iter().map(|w| w.at(i).clone()).collect::<Vec<T>>();
    UPWord {
        stem: (0..s).map(col).collect(),
        loop_: (s..s + l).map(col).collect(),
    }
}

pub fn unzip<T: Clone + Eq>(u: &UPWord<Vec<T>>) -> Vec<UPWord<T>> {
    let k = u.loop_[0].len();
    (0..k).map(|i| u.map(|v| v[i].clone()).normalize()).collect()
}

/// Named event classes used by guards and witness input sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventClass {
    Inputs(Option<Channel>),
    Outputs(Option<Channel>),
    /// Public inputs, public outputs and final-memory exposures.
    Low,
    Ext,
    /// Every non-silent event.
    All,
    Nothing,
}

impl EventClass {
    pub fn contains(&self, e: &Event) -> bool {
        match self {
            EventClass::Inputs(c) => {
                matches!(e, Event::Input { chan, .. } if c.map_or(true, |c| c == *chan))
            }
            EventClass::Outputs(c) => {
                matches!(e, Event::Output { chan, .. } if c.map_or(true, |c| c == *chan))
            }
            EventClass::Low => matches!(
                e,
                Event::Input { chan: Channel::Public, .. }
                    | Event::Output { chan: Channel::Public, .. }
                    | Event::Ext(Ext::Final(_))
            ),
            EventClass::Ext => matches!(e, Event::Ext(_)),
            EventClass::All => !e.is_eps(),
            EventClass::Nothing => false,
        }
    }

    pub fn agree(&self, a: &Event, b: &Event) -> bool {
        agree_on(a, b, |e| self.contains(e))
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "inputs" => EventClass::Inputs(None),
            "inputs(secret)" => EventClass::Inputs(Some(Channel::Secret)),
            "inputs(public)" => EventClass::Inputs(Some(Channel::Public)),
            "outputs" => EventClass::Outputs(None),
            "outputs(secret)" => EventClass::Outputs(Some(Channel::Secret)),
            "outputs(public)" => EventClass::Outputs(Some(Channel::Public)),
            "low" => EventClass::Low,
            "ext" => EventClass::Ext,
            "all" => EventClass::All,
            "none" => EventClass::Nothing,
            _ => return None,
        })
    }
}

impl fmt::Display for EventClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventClass::Inputs(None) => write!(f, "inputs"),
            EventClass::Inputs(Some(c)) => write!(f, "inputs({c})"),
            EventClass::Outputs(None) => write!(f, "outputs"),
            EventClass::Outputs(Some(c)) => write!(f, "outputs({c})"),
            EventClass::Low => write!(f, "low"),
            EventClass::Ext => write!(f, "ext"),
            EventClass::All => write!(f, "all"),
            EventClass::Nothing => write!(f, "none"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inp(v: i64) -> Event {
        Event::Input { chan: Channel::Secret, val: v }
    }

    fn out(v: i64) -> Event {
        Event::Output { chan: Channel::Public, val: v }
    }

    #[test]
    fn agreement_examples() {
        let ins = EventClass::Inputs(None);
        assert!(ins.agree(&Event::Eps, &out(3)));
        assert!(ins.agree(&inp(1), &inp(1)));
        assert!(!ins.agree(&inp(1), &Event::Eps));
    }

    #[test]
    fn projection_examples() {
        let w = UPWord::new(vec![inp(1), Event::Eps, out(1)], vec![Event::Bot]);
        assert_eq!(project(&w, Event::is_input), Projected::Finite(vec![inp(1)]));
        let all = UPWord::new(vec![inp(0)], vec![inp(1)]);
        assert_eq!(project(&all, Event::is_input), Projected::Infinite(all.clone()));
        // stem [a,b], loop [eps,c], gamma = {c}
        let w = UPWord::new(vec![inp(0), inp(1)], vec![Event::Eps, out(2)]);
        let p = project(&w, |e| *e == out(2));
        let expected = Projected::Infinite(UPWord::new(vec![], vec![out(2)]));
        assert!(p.same_word(&expected));
        if let Projected::Infinite(u) = p {
            let direct: Vec<Event> = w.prefix(8).into_iter().filter(|e| *e == out(2)).collect();
            assert_eq!(u.prefix(direct.len()), direct);
        }
    }

    #[test]
    fn compression_examples() {
        let w = UPWord::new(vec![Event::Eps, inp(1), Event::Eps], vec![out(2), Event::Eps]);
        assert_eq!(compress(&w).unwrap(), UPWord::new(vec![inp(1)], vec![out(2)]));
        let clean = UPWord::new(vec![inp(1)], vec![Event::Bot]);
        assert_eq!(compress(&clean).unwrap(), clean);
        assert_eq!(compress(&UPWord::new(vec![], vec![Event::Eps])), Err(SilentDivergence));
        let t = UPWord::new(vec![inp(1), Event::Eps, out(1)], vec![Event::Bot]);
        assert_eq!(compress(&t).unwrap(), UPWord::new(vec![inp(1), out(1)], vec![Event::Bot]));
    }

    #[test]
    fn zip_examples() {
        let a = UPWord::new(vec!['a'], vec!['c']);
        let b = UPWord::new(vec!['b'], vec!['d']);
        let z = zip(&[a.clone(), b.clone()]);
        assert_eq!(z, UPWord::new(vec![vec!['a', 'b']], vec![vec!['c', 'd']]));
        assert_eq!(unzip(&z), vec![a.clone(), b]);
        let one = zip(std::slice::from_ref(&a));
        assert_eq!(one.loop_, vec![vec!['c']]);
        assert_eq!(unzip(&one), vec![a]);
        let x = UPWord::new(vec![], vec![1, 2]);
        let y = UPWord::new(vec![], vec![3, 4, 5]);
        let z = zip(&[x.clone(), y.clone()]);
        assert_eq!(z.loop_.len(), 6);
        for i in 0..12 {
            assert_eq!(z.at(i), &vec![*x.at(i), *y.at(i)]);
        }
    }

    #[test]
    fn normalization_shortens() {
        let w = UPWord::new(vec![1, 2, 1, 2], vec![1, 2, 1, 2]);
        assert_eq!(w.normalize(), UPWord::new(vec![], vec![1, 2]));
    }

    fn small_event() -> impl Strategy<Value = Event> {
        prop_oneof![
            Just(Event::Eps),
            Just(Event::Bot),
            (0i64..2).prop_map(inp),
            (0i64..2).prop_map(out),
        ]
    }

    fn word() -> impl Strategy<Value = UPWord<Event>> {
        (
            prop::collection::vec(small_event(), 0..5),
            prop::collection::vec(small_event(), 1..4),
        )
            .prop_map(|(s, l)| UPWord::new(s, l))
    }

    proptest! {
        #[test]
        fn zip_round_trip(ws in prop::collection::vec(word(), 1..4)) {
            let back = unzip(&zip(&ws));
            for (a, b) in ws.iter().zip(&back) {
                prop_assert_eq!(a.prefix(64), b.prefix(64));
            }
        }

        #[test]
        fn compress_idempotent(w in word()) {
            if let Ok(c) = compress(&w) {
                let cc = compress(&c).unwrap();
                prop_assert_eq!(c.prefix(64), cc.prefix(64));
            }
        }

        #[test]
        fn agreement_reflexive_symmetric(a in small_event(), b in small_event()) {
            for g in [EventClass::Inputs(None), EventClass::Outputs(None), EventClass::Low, EventClass::All] {
                prop_assert!(g.agree(&a, &a));
                prop_assert_eq!(g.agree(&a, &b), g.agree(&b, &a));
            }
        }

        #[test]
        fn normalize_preserves_word(w in word()) {
            prop_assert_eq!(w.prefix(64), w.normalize().prefix(64));
        }
    }
}
