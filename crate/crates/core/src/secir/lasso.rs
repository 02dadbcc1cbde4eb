//! Bounded enumeration of lasso-shaped executions.

use std::collections::HashMap;

use super::{AttackModel, Config, Event, Program};
use crate::traceops::UPWord;
use crate::BudgetExceeded;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Step {
    pub from: Config,
    pub event: Event,
    pub to: Config,
}

/// A finite stem followed by a loop that returns to its first config.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LassoExecution {
    pub stem: Vec<Step>,
    pub loop_: Vec<Step>,
}

impl LassoExecution {
    pub fn trace(&self) -> UPWord<Event> {
        UPWord::new(
            self.stem.iter().map(|s| s.event.clone()).collect(),
            self.loop_.iter().map(|s| s.event.clone()).collect(),
        )
    }

    /// Source configs of each step, as a periodic word.
    pub fn states(&self) -> UPWord<Config> {
        UPWord::new(
            self.stem.iter().map(|s| s.from.clone()).collect(),
            self.loop_.iter().map(|s| s.from.clone()).collect(),
        )
    }

    /// Adjacency, loop closure and a visible loop event.
    pub fn is_well_formed(&self) -> bool {
        let all: Vec<&Step> = self.stem.iter().chain(&self.loop_).collect();
        let adjacent = all.windows(2).all(|w| w[0].to == w[1].from);
        let closed = match (self.loop_.first(), self.loop_.last()) {
            (Some(f), Some(l)) => l.to == f.from,
            _ => false,
        };
        adjacent && closed && self.loop_.iter().any(|s| !s.event.is_eps())
    }

    /// True when every step is a transition of `p` under `m`, starting at
    /// the initial config.
    pub fn is_execution_of(&self, p: &Program, m: &AttackModel) -> bool {
        let first = self.stem.first().or(self.loop_.first());
        self.is_well_formed()
            && first.map_or(false, |s| s.from == p.initial_config())
            && self
                .stem
                .iter()
                .chain(&self.loop_)
                .all(|s| p.step(m, &s.from).contains(&(s.event.clone(), s.to.clone())))
    }

    pub fn len(&self) -> usize {
        self.stem.len() + self.loop_.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn trace_of(x: &LassoExecution) -> UPWord<Event> {
    x.trace()
}

#[derive(Debug, Clone)]
pub struct LassoSet {
    pub lassos: Vec<LassoExecution>,
    /// Some path hit the length bound before closing a loop.
    pub truncated: bool,
    pub explored: usize,
}

/// Every lasso with stem length at most `stem_max` and loop length at most
/// `loop_max`. Each lasso closes at the first repeated config of its path,
/// so lassos are canonical up to loop rotation.
pub fn enumerate_lassos(
    p: &Program,
    m: &AttackModel,
    stem_max: usize,
    loop_max: usize,
    budget: usize,
) -> Result<LassoSet, BudgetExceeded> {
    let mut e = Enum {
        p,
        m,
        stem_max,
        loop_max,
        budget,
        explored: 0,
        truncated: false,
        out: Vec::new(),
        on_path: HashMap::new(),
        steps: Vec::new(),
    };
    let init = p.initial_config();
    e.on_path.insert(init.clone(), 0);
    e.dfs(init)?;
    Ok(LassoSet {
        lassos: e.out,
        truncated: e.truncated,
        explored: e.explored,
    })
}

struct Enum<'a> {
    p: &'a Program,
    m: &'a AttackModel,
    stem_max: usize,
    loop_max: usize,
    budget: usize,
    explored: usize,
    truncated: bool,
    out: Vec<LassoExecution>,
    on_path: HashMap<Config, usize>,
    steps: Vec<Step>,
}

impl Enum<'_> {
    fn dfs(&mut self, c: Config) -> Result<(), BudgetExceeded> {
        self.explored += 1;
        if self.explored > self.budget {
            return Err(BudgetExceeded { limit: self.budget });
        }
        let n = self.steps.len();
        for (event, next) in self.p.step(self.m, &c) {
            let step = Step {
                from: c.clone(),
                event,
                to: next.clone(),
            };
            if let Some(&j) = self.on_path.get(&next) {
                if j <= self.stem_max && n + 1 - j <= self.loop_max {
                    let mut loop_: Vec<Step> = self.steps[j..].to_vec();
                    loop_.push(step);
                    if loop_.iter().any(|s| !s.event.is_eps()) {
                        self.out.push(LassoExecution {
                            stem: self.steps[..j].to_vec(),
                            loop_,
                        });
                    }
                } else {
                    self.truncated = true;
                }
                continue;
            }
            if n + 1 >= self.stem_max + self.loop_max {
                self.truncated = true;
                continue;
            }
            self.on_path.insert(next.clone(), n + 1);
            self.steps.push(step);
            self.dfs(next.clone())?;
            self.steps.pop();
            self.on_path.remove(&next);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secir::{parse_program, Channel};
    use crate::traceops::compress;

    #[test]
    fn fold_source_two_lassos() {
        let p = parse_program(super::super::tests::FOLD_SRC.replace("domain 4", "domain 2").as_str())
            .unwrap();
        let set = enumerate_lassos(&p, &AttackModel::io(), 8, 2, 100_000).unwrap();
        assert_eq!(set.lassos.len(), 2);
        for l in &set.lassos {
            assert!(l.is_execution_of(&p, &AttackModel::io()));
            assert_eq!(l.trace().loop_, vec![Event::Bot]);
        }
    }

    #[test]
    fn straight_line_one_lasso() {
        let p = parse_program("program s domain 3\nL1: skip\nL2: halt\n").unwrap();
        let set = enumerate_lassos(&p, &AttackModel::io(), 4, 2, 1000).unwrap();
        assert_eq!(set.lassos.len(), 1);
        assert!(!set.truncated);
    }

    #[test]
    fn nonterminating_loop() {
        let p = parse_program("program n domain 2\nL1: output(public, 1)\nL2: goto L1\n").unwrap();
        let set = enumerate_lassos(&p, &AttackModel::io(), 4, 4, 1000).unwrap();
        assert_eq!(set.lassos.len(), 1);
        let l = &set.lassos[0];
        assert!(l.stem.is_empty());
        assert_eq!(l.loop_.len(), 2);
        let t = compress(&l.trace()).unwrap();
        assert_eq!(t.loop_, vec![Event::Output { chan: Channel::Public, val: 1 }]);
    }

    #[test]
    fn budget_is_reported() {
        let p = parse_program(super::super::tests::FOLD_SRC).unwrap();
        let e = enumerate_lassos(&p, &AttackModel::io(), 10, 4, 3).unwrap_err();
        assert_eq!(e.limit, 3);
    }

    #[test]
    fn trace_and_states_accessors() {
        let p = parse_program("program t domain 2\nvar x\nL1: x := input(secret)\nL2: skip\nL3: output(public, x)\n")
            .unwrap();
        let set = enumerate_lassos(&p, &AttackModel::io(), 8, 2, 1000).unwrap();
        let l = set.lassos.iter().find(|l| l.stem[0].event.value() == Some(1)).unwrap();
        let t = trace_of(l);
        assert_eq!(t.stem.len(), 3);
        assert_eq!(t.loop_, vec![Event::Bot]);
        assert_eq!(t.stem[1], Event::Eps);
        let c = compress(&t).unwrap();
        assert_eq!(
            c.stem,
            vec![
                Event::Input { chan: Channel::Secret, val: 1 },
                Event::Output { chan: Channel::Public, val: 1 }
            ]
        );
        assert_eq!(l.states().stem[0], p.initial_config());
    }
}
