//! Nested depth-first search for accepting cycles in lazily generated graphs.

use std::collections::HashMap;
use std::hash::Hash;

/// A path from an initial node into a cycle. Each entry is a node and the
/// label of the edge leaving it; the last cycle edge returns to `cycle[0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lasso<N, E> {
    pub stem: Vec<(N, E)>,
    pub cycle: Vec<(N, E)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchError<X> {
    Budget(usize),
    Step(X),
}

struct Graph<N, E> {
    ids: HashMap<N, usize>,
    nodes: Vec<N>,
    succ: Vec<Option<Vec<(E, usize)>>>,
}

impl<N: Clone + Eq + Hash, E: Clone> Graph<N, E> {
    fn intern(&mut self, n: N, budget: usize) -> Result<usize, usize> {
        if let Some(&i) = self.ids.get(&n) {
            return Ok(i);
        }
        if self.nodes.len() >= budget {
            return Err(budget);
        }
        let i = self.nodes.len();
        self.ids.insert(n.clone(), i);
        self.nodes.push(n);
        self.succ.push(None);
        Ok(i)
    }

    fn expand<X>(
        &mut self,
        i: usize,
        succ: &mut impl FnMut(&N) -> Result<Vec<(E, N)>, X>,
        budget: usize,
    ) -> Result<(), SearchError<X>> {
        if self.succ[i].is_some() {
            return Ok(());
        }
        let raw = succ(&self.nodes[i]).map_err(SearchError::Step)?;
        let mut out = Vec::with_capacity(raw.len());
        for (e, n) in raw {
            let j = self.intern(n, budget).map_err(SearchError::Budget)?;
            out.push((e, j));
        }
        self.succ[i] = Some(out);
        Ok(())
    }

    fn edge(&self, i: usize, k: usize) -> &(E, usize) {
        &self.succ[i].as_ref().expect("expanded")[k]
    }

    fn degree(&self, i: usize) -> usize {
        self.succ[i].as_ref().map_or(0, |s| s.len())
    }
}

/// Outcome of a search: the lasso if one exists, and the number of
/// distinct nodes generated.
pub type SearchResult<N, E, X> = Result<(Option<Lasso<N, E>>, usize), SearchError<X>>;

/// Searches for a reachable cycle through an accepting node. Exploration
/// order follows the order of `inits` and of each successor list, so the
/// result is deterministic.
pub fn find_accepting_cycle<N, E, X>(
    inits: Vec<N>,
    mut succ: impl FnMut(&N) -> Result<Vec<(E, N)>, X>,
    accepting: impl Fn(&N) -> bool,
    budget: usize,
) -> SearchResult<N, E, X>
where
    N: Clone + Eq + Hash,
    E: Clone,
{
    let mut g: Graph<N, E> = Graph {
        ids: HashMap::new(),
        nodes: Vec::new(),
        succ: Vec::new(),
    };
    let mut blue: Vec<bool> = Vec::new();
    let mut red: Vec<bool> = Vec::new();
    let mut on_stack: Vec<bool> = Vec::new();
    let grow = |v: &mut Vec<bool>, n: usize| {
        if v.len() < n {
            v.resize(n, false);
        }
    };
    for init in inits {
        let root = g.intern(init, budget).map_err(SearchError::Budget)?;
        grow(&mut blue, g.nodes.len());
        if blue[root] {
            continue;
        }
        // frames: (node, next edge index)
        let mut outer: Vec<(usize, usize)> = vec![(root, 0)];
        blue[root] = true;
        grow(&mut on_stack, g.nodes.len());
        on_stack[root] = true;
        while let Some(&(v, k)) = outer.last() {
            g.expand(v, &mut succ, budget)?;
            let n = g.nodes.len();
            grow(&mut blue, n);
            grow(&mut red, n);
            grow(&mut on_stack, n);
            if k < g.degree(v) {
                outer.last_mut().expect("non-empty").1 += 1;
                let w = g.edge(v, k).1;
                if !blue[w] {
                    blue[w] = true;
                    on_stack[w] = true;
                    outer.push((w, 0));
                }
                continue;
            }
            if accepting(&g.nodes[v]) {
                if let Some((target, inner)) = red_search(&mut g, v, &mut red, &on_stack, &mut succ, budget)? {
                    let frame_of = |x: usize| outer.iter().position(|(y, _)| *y == x).expect("on stack");
                    let p = frame_of(target);
                    let with_edge = |(x, k): (usize, usize)| (g.nodes[x].clone(), g.edge(x, k - 1).0.clone());
                    let stem: Vec<(N, E)> = outer[..p].iter().copied().map(with_edge).collect();
                    let mut cycle: Vec<(N, E)> = outer[p..outer.len() - 1].iter().copied().map(with_edge).collect();
                    for (x, k) in inner {
                        cycle.push((g.nodes[x].clone(), g.edge(x, k).0.clone()));
                    }
                    return Ok((Some(Lasso { stem, cycle }), g.nodes.len()));
                }
            }
            on_stack[v] = false;
            outer.pop();
        }
    }
    Ok((None, g.nodes.len()))
}

/// Inner search from `seed` for any node on the outer stack. Returns the
/// node hit and the path of (node, edge index) taken from `seed`.
#[allow(clippy::type_complexity)]
fn red_search<N, E, X>(
    g: &mut Graph<N, E>,
    seed: usize,
    red: &mut Vec<bool>,
    on_stack: &[bool],
    succ: &mut impl FnMut(&N) -> Result<Vec<(E, N)>, X>,
    budget: usize,
) -> Result<Option<(usize, Vec<(usize, usize)>)>, SearchError<X>>
where
    N: Clone + Eq + Hash,
    E: Clone,
{
    let mut stack: Vec<(usize, usize)> = vec![(seed, 0)];
    while let Some(&(v, k)) = stack.last() {
        g.expand(v, succ, budget)?;
        if red.len() < g.nodes.len() {
            red.resize(g.nodes.len(), false);
        }
        if k >= g.degree(v) {
            stack.pop();
            continue;
        }
        stack.last_mut().expect("non-empty").1 += 1;
        let w = g.edge(v, k).1;
        if w < on_stack.len() && on_stack[w] {
            let path = stack.iter().map(|&(x, k)| (x, k - 1)).collect();
            return Ok(Some((w, path)));
        }
        if !red[w] {
            red[w] = true;
            stack.push((w, 0));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    type R = SearchResult<u32, char, ()>;

    fn run(edges: &[(u32, char, u32)], acc: &[u32]) -> R {
        find_accepting_cycle(
            vec![0u32],
            |n| Ok(edges.iter().filter(|e| e.0 == *n).map(|e| (e.1, e.2)).collect()),
            |n| acc.contains(n),
            100,
        )
    }

    #[test]
    fn finds_cycle_through_accepting() {
        let edges = [(0, 'a', 1), (1, 'b', 2), (2, 'c', 1)];
        let (l, _) = run(&edges, &[2]).unwrap();
        let l = l.unwrap();
        assert_eq!(l.stem, vec![(0, 'a')]);
        assert_eq!(l.cycle, vec![(1, 'b'), (2, 'c')]);
    }

    #[test]
    fn accepting_off_cycle_is_empty() {
        let edges = [(0, 'a', 1), (1, 'b', 2), (2, 'c', 2)];
        let (l, n) = run(&edges, &[1]).unwrap();
        assert!(l.is_none());
        assert_eq!(n, 3);
    }

    #[test]
    fn self_loop() {
        let (l, _) = run(&[(0, 'x', 0)], &[0]).unwrap();
        let l = l.unwrap();
        assert!(l.stem.is_empty());
        assert_eq!(l.cycle, vec![(0, 'x')]);
    }

    #[test]
    fn budget() {
        let r: SearchResult<u32, (), ()> =
            find_accepting_cycle(vec![0u32], |n| Ok(vec![((), n + 1)]), |_| false, 10);
        assert_eq!(r.unwrap_err(), SearchError::Budget(10));
    }

    #[test]
    fn cycle_reached_through_other_branch() {
        // accepting 3 lies on cycle 1 -> 3 -> 1 discovered after exploring 2
        let edges = [(0, 'a', 1), (1, 'b', 2), (1, 'c', 3), (3, 'd', 1), (2, 'e', 2)];
        let (l, _) = run(&edges, &[3]).unwrap();
        let l = l.unwrap();
        let nodes: Vec<u32> = l.cycle.iter().map(|x| x.0).collect();
        assert!(nodes.contains(&3) && nodes.contains(&1));
    }
}
