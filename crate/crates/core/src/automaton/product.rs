//! The product of an acceptor with k copies of a program.

use super::buffer::{AState, Acceptor, Overflow};
use super::search::{find_accepting_cycle, Lasso, SearchError};
use crate::secir::{AttackModel, Config, Event, LassoExecution, Program, ProgramError, Step};
use crate::traceops::UPWord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("state budget of {0} exceeded")]
    Budget(usize),
    #[error("buffer bound {0} exceeded")]
    Overflow(usize),
}

impl From<Overflow> for ExploreError {
    fn from(o: Overflow) -> Self {
        ExploreError::Overflow(o.bound)
    }
}

impl From<SearchError<Overflow>> for ExploreError {
    fn from(e: SearchError<Overflow>) -> Self {
        match e {
            SearchError::Budget(n) => ExploreError::Budget(n),
            SearchError::Step(o) => o.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProductError {
    #[error("program `{program}` has silent steps under attack model `{model}`; a buffered automaton is required")]
    NeedsBuffering { program: String, model: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductState {
    pub a: AState,
    pub cfgs: Vec<Config>,
}

/// Lazily explored product `A × P^k`.
pub struct ProductSystem<'a> {
    pub acceptor: &'a Acceptor,
    pub program: &'a Program,
    pub model: &'a AttackModel,
}

/// All joint steps of k configs: one program step per track.
pub fn joint_steps(p: &Program, m: &AttackModel, cfgs: &[Config]) -> Vec<(Vec<Event>, Vec<Config>)> {
    let mut acc: Vec<(Vec<Event>, Vec<Config>)> = vec![(Vec::new(), Vec::new())];
    for c in cfgs {
        let steps = p.step(m, c);
        let mut next = Vec::with_capacity(acc.len() * steps.len());
        for (es, cs) in &acc {
            for (e, c2) in &steps {
                let mut es = es.clone();
                let mut cs = cs.clone();
                es.push(e.clone());
                cs.push(c2.clone());
                next.push((es, cs));
            }
        }
        acc = next;
    }
    acc
}

impl<'a> ProductSystem<'a> {
    pub fn new(
        acceptor: &'a Acceptor,
        program: &'a Program,
        model: &'a AttackModel,
    ) -> Result<Self, ProductError> {
        program.check_silent_cycles(model)?;
        if !acceptor.is_buffered() && program.has_silent_steps(model) {
            return Err(ProductError::NeedsBuffering {
                program: program.name.clone(),
                model: model.name.clone(),
            });
        }
        Ok(ProductSystem {
            acceptor,
            program,
            model,
        })
    }

    pub fn k(&self) -> usize {
        self.acceptor.k()
    }

    pub fn initial(&self) -> ProductState {
        ProductState {
            a: self.acceptor.initial(),
            cfgs: vec![self.program.initial_config(); self.k()],
        }
    }

    pub fn accepting(&self, s: &ProductState) -> bool {
        self.acceptor.accepting(&s.a)
    }

    pub fn successors(&self, s: &ProductState) -> Result<Vec<(Vec<Event>, ProductState)>, Overflow> {
        let mut out = Vec::new();
        for (v, cfgs) in joint_steps(self.program, self.model, &s.cfgs) {
            for a in self.acceptor.step(&s.a, &v)? {
                out.push((
                    v.clone(),
                    ProductState {
                        a,
                        cfgs: cfgs.clone(),
                    },
                ));
            }
        }
        Ok(out)
    }

    /// Membership of a fixed word in the product language.
    pub fn accepts_word(&self, w: &UPWord<Vec<Event>>, budget: usize) -> Result<bool, ExploreError> {
        let (s, l) = (w.stem.len(), w.loop_.len());
        let next = |p: usize| if p + 1 < s + l { p + 1 } else { s };
        let (found, _) = find_accepting_cycle(
            vec![(self.initial(), 0usize)],
            |(st, p)| {
                let letter = w.at(*p);
                let mut out = Vec::new();
                for (v, cfgs) in joint_steps(self.program, self.model, &st.cfgs) {
                    if &v != letter {
                        continue;
                    }
                    for a in self.acceptor.step(&st.a, &v)? {
                        out.push(((), (ProductState { a, cfgs: cfgs.clone() }, next(*p))));
                    }
                }
                Ok(out)
            },
            |(st, _)| self.accepting(st),
            budget,
        )?;
        Ok(found.is_some())
    }

    pub fn show(&self, s: &ProductState) -> String {
        let cfgs: Vec<String> = s.cfgs.iter().map(|c| self.program.show_config(c)).collect();
        format!("<{} | {}>", self.acceptor.show(&s.a), cfgs.join(" "))
    }
}

/// An accepting lasso of a product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductLasso {
    pub stem: Vec<(ProductState, Vec<Event>)>,
    pub cycle: Vec<(ProductState, Vec<Event>)>,
}

impl ProductLasso {
    fn from_search(l: Lasso<ProductState, Vec<Event>>) -> Self {
        ProductLasso {
            stem: l.stem,
            cycle: l.cycle,
        }
    }

    pub fn word(&self) -> UPWord<Vec<Event>> {
        UPWord::new(
            self.stem.iter().map(|(_, v)| v.clone()).collect(),
            self.cycle.iter().map(|(_, v)| v.clone()).collect(),
        )
    }

    /// The execution followed by track `i`.
    pub fn track(&self, i: usize) -> LassoExecution {
        let nodes: Vec<&(ProductState, Vec<Event>)> = self.stem.iter().chain(&self.cycle).collect();
        let head = &self.cycle[0].0;
        let steps: Vec<Step> = nodes
            .iter()
            .enumerate()
            .map(|(j, (s, v))| {
                let to = nodes.get(j + 1).map_or(head, |n| &n.0);
                Step {
                    from: s.cfgs[i].clone(),
                    event: v[i].clone(),
                    to: to.cfgs[i].clone(),
                }
            })
            .collect();
        let n = self.stem.len();
        LassoExecution {
            stem: steps[..n].to_vec(),
            loop_: steps[n..].to_vec(),
        }
    }
}

/// Nested-DFS emptiness check; returns an accepting lasso if the product
/// language is non-empty, with the number of product states generated.
pub fn find_accepting_lasso(
    ps: &ProductSystem,
    budget: usize,
) -> Result<(Option<ProductLasso>, usize), ExploreError> {
    let (l, n) = find_accepting_cycle(
        vec![ps.initial()],
        |s| ps.successors(s),
        |s| ps.accepting(s),
        budget,
    )?;
    Ok((l.map(ProductLasso::from_search), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::{accepts, parse_automaton};
    use crate::secir::parse_program;

    #[test]
    fn universal_acceptor_single_track() {
        let p = parse_program("program p domain 2\nvar x\nL1: x := input(secret)\nL2: output(public, x)\n").unwrap();
        let a = Acceptor::buffered(
            parse_automaton("automaton u tracks 1\nstate q initial accepting\ntrans q -> q when true\n").unwrap(),
            2,
        );
        let m = AttackModel::io();
        let ps = ProductSystem::new(&a, &p, &m).unwrap();
        let (l, _) = find_accepting_lasso(&ps, 10_000).unwrap();
        let l = l.expect("non-empty");
        let t = l.track(0);
        assert!(t.is_execution_of(&p, &m));
        assert!(ps.accepts_word(&l.word(), 10_000).unwrap());
        assert!(accepts(&a, &l.word(), 10_000).unwrap());
    }

    #[test]
    fn plain_acceptor_rejects_silent_program() {
        let p = parse_program("program p domain 2\nvar x\nL1: x := 1\n").unwrap();
        let a = Acceptor::plain(
            parse_automaton("automaton u tracks 1\nstate q initial accepting\ntrans q -> q when true\n").unwrap(),
        );
        let m = AttackModel::io();
        assert!(matches!(
            ProductSystem::new(&a, &p, &m),
            Err(ProductError::NeedsBuffering { .. })
        ));
    }
}
