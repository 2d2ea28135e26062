//! Random call graphs and a brute-force reading of the structural slicing
//! rules, written independently of the library's worklist.

use std::collections::BTreeSet;

use pocgen::solidity::{CallGraph, GraphNode};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct RandomGraph {
    pub underscored: Vec<bool>,
    pub modifiers: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
    pub seeds: Vec<usize>,
}

impl RandomGraph {
    pub fn generate(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(1..=20);
        let underscored = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let modifiers = (0..n)
            .map(|_| {
                let k = rng.random_range(0..=2);
                (0..k).map(|_| rng.random_range(0..5)).collect()
            })
            .collect();
        let m = rng.random_range(0..=n * 3);
        let edges = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let s = rng.random_range(1..=3.min(n));
        let seeds = (0..s).map(|_| rng.random_range(0..n)).collect();
        RandomGraph {
            underscored,
            modifiers,
            edges,
            seeds,
        }
    }

    pub fn graph(&self) -> CallGraph {
        let nodes = self
            .underscored
            .iter()
            .zip(&self.modifiers)
            .map(|(&u, m)| GraphNode {
                underscored: u,
                modifiers: m.clone(),
            })
            .collect();
        CallGraph::new(nodes, self.edges.iter().copied())
    }

    fn calls(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
    }

    /// Functions and modifiers in the slice. Grows the set one rule at a
    /// time over all node pairs until a full pass adds nothing.
    pub fn oracle(&self) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let n = self.underscored.len();
        let seed: BTreeSet<usize> = self.seeds.iter().copied().collect();
        // frontier: seeds plus their direct callers and callees
        let frontier: BTreeSet<usize> = (0..n)
            .filter(|&v| seed.contains(&v) || seed.iter().any(|&s| self.calls(s, v) || self.calls(v, s)))
            .collect();
        // descend through underscored callees
        let mut walk = frontier.clone();
        loop {
            let grown: BTreeSet<usize> = (0..n)
                .filter(|&v| walk.contains(&v) || (self.underscored[v] && walk.iter().any(|&u| self.calls(u, v))))
                .collect();
            if grown == walk {
                break;
            }
            walk = grown;
        }
        // an underscored member also brings its non-underscored callees
        let mut fns = walk.clone();
        for v in 0..n {
            if walk.iter().any(|&u| self.underscored[u] && self.calls(u, v)) {
                fns.insert(v);
            }
        }
        let mods = fns.iter().flat_map(|&f| self.modifiers[f].iter().copied()).collect();
        (fns, mods)
    }
}
