//! Brute-force ground truth for universal properties: enumerate bounded
//! lassos, form every bundle, and test it against each violation automaton.
//!
//! Plays of a universal prefix are plain trace bundles, so the antagonist's
//! strategy is just the bundle itself. Maximal plays are approximated by the
//! lasso bounds; a report notes when enumeration hit them.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::automaton::{accepts, Acceptor, ExploreError, ProductSystem};
use crate::props::Property;
use crate::refinement::Status;
use crate::secir::{enumerate_lassos, Event, LassoExecution, Program};
use crate::traceops::{compress, project, zip, EventClass, Projected, UPWord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub stem_max: usize,
    pub loop_max: usize,
    pub budget: usize,
    #[serde(serialize_with = "ser_display")]
    pub inputs: EventClass,
}

fn ser_display<S: serde::Serializer, T: fmt::Display>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(x)
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            stem_max: 10,
            loop_max: 4,
            budget: 1_000_000,
            inputs: EventClass::Inputs(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("alternating quantifier prefixes are not supported by the oracle")]
    Unsupported,
    #[error("lasso enumeration exceeded {0} states")]
    Budget(usize),
    #[error("automaton run exceeded {0} states")]
    RunBudget(usize),
}

/// A bundle of lassos accepted by automaton `automaton`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub automaton: usize,
    pub bundle: Vec<LassoExecution>,
}

impl Violation {
    pub fn traces(&self) -> Vec<UPWord<Event>> {
        self.bundle.iter().map(|l| l.trace()).collect()
    }

    /// The joint word read by the product, track by track in lockstep.
    pub fn word(&self) -> UPWord<Vec<Event>> {
        zip(&self.traces())
    }

    /// Input projections, normalized so that equal words compare equal.
    pub fn key(&self, inputs: &EventClass) -> (usize, Vec<Projected<Event>>) {
        let proj = self
            .traces()
            .iter()
            .map(|t| match project(t, |e| inputs.contains(e)) {
                Projected::Infinite(w) => Projected::Infinite(w.normalize()),
                f => f,
            })
            .collect();
        (self.automaton, proj)
    }

    /// Re-validates against the program and property: every track is an
    /// execution, the base automaton accepts the compressed bundle, and the
    /// product accepts the joint word unless its buffers overflow `bound`.
    pub fn recheck(&self, p: &Program, prop: &Property, bound: usize, budget: usize) -> bool {
        if !self.bundle.iter().all(|l| l.is_execution_of(p, &prop.model)) {
            return false;
        }
        let a = &prop.automata[self.automaton];
        if !accepts_compressed(&Acceptor::plain(a.clone()), &self.traces(), budget).unwrap_or(false) {
            return false;
        }
        let acc = if p.has_silent_steps(&prop.model) {
            Acceptor::buffered(a.clone(), bound)
        } else {
            Acceptor::plain(a.clone())
        };
        let Ok(ps) = ProductSystem::new(&acc, p, &prop.model) else {
            return false;
        };
        match ps.accepts_word(&self.word(), budget) {
            Ok(b) => b,
            Err(ExploreError::Overflow(_)) => true,
            Err(ExploreError::Budget(_)) => false,
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Violation", 2)?;
        st.serialize_field("automaton", &self.automaton)?;
        let traces: Vec<String> = self.traces().iter().map(|t| t.to_string()).collect();
        st.serialize_field("traces", &traces)?;
        st.end()
    }
}

fn accepts_compressed(a: &Acceptor, traces: &[UPWord<Event>], budget: usize) -> Result<bool, OracleError> {
    let mut cs = Vec::with_capacity(traces.len());
    for t in traces {
        match compress(t) {
            Ok(c) => cs.push(c),
            // a silently diverging track never produces the next letter
            Err(_) => return Ok(false),
        }
    }
    accepts(a, &zip(&cs).normalize(), budget).map_err(|e| match e {
        ExploreError::Budget(n) => OracleError::RunBudget(n),
        ExploreError::Overflow(n) => OracleError::RunBudget(n),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationSet {
    pub violations: Vec<Violation>,
    pub lassos: usize,
    pub bundles: usize,
    /// Some execution path hit the lasso bounds.
    pub truncated: bool,
}

/// Every violating bundle formed from bounded lassos of `p`, ordered by
/// automaton and then by bundle index.
pub fn find_violations(p: &Program, prop: &Property, bounds: &Bounds) -> Result<ViolationSet, OracleError> {
    if !prop.is_universal() {
        return Err(OracleError::Unsupported);
    }
    let set = enumerate_lassos(p, &prop.model, bounds.stem_max, bounds.loop_max, bounds.budget)
        .map_err(|e| OracleError::Budget(e.limit))?;
    let traces: Vec<UPWord<Event>> = set.lassos.iter().map(|l| l.trace()).collect();
    let k = prop.k();
    let n = set.lassos.len();
    let total = n.checked_pow(k as u32).unwrap_or(usize::MAX);
    if total > bounds.budget {
        return Err(OracleError::Budget(bounds.budget));
    }
    let tuple = |mut ix: usize| {
        let mut t = vec![0; k];
        for slot in t.iter_mut().rev() {
            *slot = ix % n;
            ix /= n;
        }
        t
    };
    let mut violations = Vec::new();
    for (ai, a) in prop.automata.iter().enumerate() {
        let acc = Acceptor::plain(a.clone());
        let found: Result<Vec<Option<Vec<usize>>>, OracleError> = (0..total)
            .into_par_iter()
            .map(|ix| {
                let t = tuple(ix);
                let bundle: Vec<UPWord<Event>> = t.iter().map(|&i| traces[i].clone()).collect();
                Ok(accepts_compressed(&acc, &bundle, bounds.budget)?.then_some(t))
            })
            .collect();
        for t in found?.into_iter().flatten() {
            violations.push(Violation {
                automaton: ai,
                bundle: t.iter().map(|&i| set.lassos[i].clone()).collect(),
            });
        }
    }
    Ok(ViolationSet {
        violations,
        lassos: n,
        bundles: total,
        truncated: set.truncated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleVerdict {
    pub status: Status,
    pub unmatched: Option<Violation>,
    pub target_violations: usize,
    pub source_violations: usize,
    pub truncated: bool,
    pub note: String,
}

const MAXIMALITY_NOTE: &str = "maximal plays approximated by lasso bounds";

/// Every violation of `t` must be matched by an input-equivalent violation
/// of `s` for the same automaton.
pub fn check_preservation_oracle(
    s: &Program,
    t: &Program,
    prop: &Property,
    bounds: &Bounds,
) -> Result<OracleVerdict, OracleError> {
    let vt = find_violations(t, prop, bounds)?;
    let vs = find_violations(s, prop, bounds)?;
    let keys: HashSet<_> = vs.violations.iter().map(|v| v.key(&bounds.inputs)).collect();
    let unmatched = vt
        .violations
        .iter()
        .find(|v| !keys.contains(&v.key(&bounds.inputs)))
        .cloned();
    let truncated = vt.truncated || vs.truncated;
    let note = if truncated {
        format!("{MAXIMALITY_NOTE}; some paths reached the bounds")
    } else {
        MAXIMALITY_NOTE.to_string()
    };
    Ok(OracleVerdict {
        status: if unmatched.is_some() { Status::Invalid } else { Status::Valid },
        unmatched,
        target_violations: vt.violations.len(),
        source_violations: vs.violations.len(),
        truncated,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::props::{final_memory_equal, universal};
    use crate::secir::{parse_program, AttackModel};

    const S: &str = "program fold domain 4\nvar x, y, z\n\
        L1: x := input(secret)\nL2: y := 42\nL3: z := y - 41\nL4: x := x * (z - 1)\n";

    #[test]
    fn folding_source_has_no_violation() {
        let p = parse_program(S).unwrap();
        let prop = Property::universal("fme", vec![final_memory_equal(&["x", "y", "z"])], AttackModel::final_memory());
        let v = find_violations(&p, &prop, &Bounds::default()).unwrap();
        assert_eq!(v.lassos, 4);
        assert!(v.violations.is_empty());
    }

    #[test]
    fn universal_acceptor_flags_every_bundle() {
        let p = parse_program(S).unwrap();
        let prop = Property::universal("all", vec![universal(2)], AttackModel::final_memory());
        let v = find_violations(&p, &prop, &Bounds::default()).unwrap();
        assert_eq!(v.violations.len(), 16);
        assert!(v.violations.iter().all(|x| x.recheck(&p, &prop, 4, 100_000)));
        let same = check_preservation_oracle(&p, &p, &prop, &Bounds::default()).unwrap();
        assert_eq!(same.status, Status::Valid);
    }

    #[test]
    fn leaking_target_is_unmatched() {
        let s = parse_program(S).unwrap();
        let t = parse_program("program leak domain 4\nvar x, y, z\nL1: x := input(secret)\nL2: y := 42\nL3: z := 1\n").unwrap();
        let prop = Property::universal("fme", vec![final_memory_equal(&["x", "y", "z"])], AttackModel::final_memory());
        let v = check_preservation_oracle(&s, &t, &prop, &Bounds::default()).unwrap();
        assert_eq!(v.status, Status::Invalid);
        assert_eq!(v.source_violations, 0);
        assert!(v.target_violations > 0);
    }
}
