use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::solidity::{CallGraph, FunctionId, ModifierId, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum SliceItem {
    Function(FunctionId),
    Modifier(ModifierId),
}

/// Result of structural expansion: every included definition with the hop
/// count at which it was first reached. Modifiers take their owner's count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Expansion {
    pub functions: BTreeMap<FunctionId, u32>,
    pub modifiers: BTreeMap<ModifierId, u32>,
}

impl Expansion {
    pub fn len(&self) -> usize {
        self.functions.len() + self.modifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn contains(&self, item: SliceItem) -> bool {
        match item {
            SliceItem::Function(f) => self.functions.contains_key(&f),
            SliceItem::Modifier(m) => self.modifiers.contains_key(&m),
        }
    }

    /// Items sorted by (hop distance, qualified name).
    pub fn ordered(&self, model: &SourceModel) -> Vec<(SliceItem, u32)> {
        let mut items: Vec<(u32, String, SliceItem)> = self
            .functions
            .iter()
            .map(|(&f, &d)| (d, model.functions[f].qualified_name.clone(), SliceItem::Function(f)))
            .chain(
                self.modifiers
                    .iter()
                    .map(|(&m, &d)| (d, model.modifiers[m].qualified_name.clone(), SliceItem::Modifier(m))),
            )
            .collect();
        items.sort();
        items.into_iter().map(|(d, _, it)| (it, d)).collect()
    }
}

/// Seeds, their direct callees and callers, every underscore-prefixed
/// function reachable along callee edges from that frontier, the first
/// non-underscored callee met from an underscored function, and the
/// modifiers attached to anything included.
pub fn expand_structural(seeds: &[FunctionId], graph: &CallGraph) -> Expansion {
    let n = graph.len();
    let mut dist: BTreeMap<FunctionId, u32> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &s in seeds.iter().filter(|&&s| s < n) {
        if dist.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    for &s in seeds.iter().filter(|&&s| s < n) {
        for &v in graph.callees(s).iter().chain(graph.callers(s)) {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(1);
                queue.push_back(v);
            }
        }
    }
    // Every frontier node may descend into underscored callees; only
    // underscored nodes also pull in a terminal non-underscored callee.
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        let from_underscored = graph.node(u).underscored;
        for &v in graph.callees(u) {
            if dist.contains_key(&v) {
                continue;
            }
            if graph.node(v).underscored {
                dist.insert(v, d + 1);
                queue.push_back(v);
            } else if from_underscored {
                dist.insert(v, d + 1);
            }
        }
    }
    let mut modifiers: BTreeMap<ModifierId, u32> = BTreeMap::new();
    for (&f, &d) in &dist {
        for &m in &graph.node(f).modifiers {
            let e = modifiers.entry(m).or_insert(d);
            *e = (*e).min(d);
        }
    }
    Expansion {
        functions: dist,
        modifiers,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::solidity::GraphNode;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    /// Applies the inclusion rules as set equations until nothing changes.
    pub(crate) fn fixpoint_oracle(
        n: usize,
        underscored: &[bool],
        mods: &[Vec<usize>],
        edges: &[(usize, usize)],
        seeds: &[usize],
    ) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let mut frontier = vec![false; n];
        for &s in seeds {
            frontier[s] = true;
        }
        for &(a, b) in edges {
            if seeds.contains(&a) {
                frontier[b] = true;
            }
            if seeds.contains(&b) {
                frontier[a] = true;
            }
        }
        let mut reached = frontier.clone();
        loop {
            let mut changed = false;
            for &(a, b) in edges {
                if reached[a] && underscored[b] && !reached[b] {
                    reached[b] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut out: BTreeSet<usize> = (0..n).filter(|&i| reached[i]).collect();
        for &(a, b) in edges {
            if reached[a] && underscored[a] {
                out.insert(b);
            }
        }
        let m = out.iter().flat_map(|&f| mods[f].iter().copied()).collect();
        (out, m)
    }

    pub(crate) fn graph_of(underscored: &[bool], mods: &[Vec<usize>], edges: &[(usize, usize)]) -> CallGraph {
        let nodes = underscored
            .iter()
            .zip(mods)
            .map(|(&u, m)| GraphNode {
                underscored: u,
                modifiers: m.clone(),
            })
            .collect();
        CallGraph::new(nodes, edges.iter().copied())
    }

    #[test]
    fn wrapper_chain_is_followed_to_the_end() {
        // transfer -> _transfer -> _beforeTokenTransfer
        let g = graph_of(&[false, true, true], &[vec![], vec![], vec![]], &[(0, 1), (1, 2)]);
        let e = expand_structural(&[0], &g);
        assert_eq!(e.functions.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(e.functions[&2], 2);
    }

    #[test]
    fn isolated_seed_is_alone() {
        let g = graph_of(&[false, false], &[vec![], vec![]], &[]);
        let e = expand_structural(&[1], &g);
        assert_eq!(e.functions.keys().copied().collect::<Vec<_>>(), vec![1]);
        assert!(e.modifiers.is_empty());
    }

    #[test]
    fn recursion_stops_at_public_implementation() {
        // seed 0 -> _a(1) -> pub(2) -> _b(3); 2 is terminal so 3 is excluded
        let g = graph_of(&[false, true, false, true], &vec![vec![]; 4], &[(0, 1), (1, 2), (2, 3)]);
        let e = expand_structural(&[0], &g);
        assert_eq!(e.functions.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn callers_are_one_hop_only() {
        // 2 -> 1 -> 0(seed); 1 is a caller, 2 is not reached
        let g = graph_of(&[false; 3], &vec![vec![]; 3], &[(1, 0), (2, 1)]);
        let e = expand_structural(&[0], &g);
        assert_eq!(e.functions.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn modifiers_of_included_functions_are_closed_over() {
        let g = graph_of(&[false, true], &[vec![0], vec![1]], &[(0, 1)]);
        let e = expand_structural(&[0], &g);
        assert_eq!(e.modifiers.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
    }

    type Arb = (Vec<bool>, Vec<Vec<usize>>, Vec<(usize, usize)>, Vec<usize>);

    fn arb_graph() -> impl Strategy<Value = Arb> {
        (1usize..=20).prop_flat_map(|n| {
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(prop::collection::vec(0usize..4, 0..3), n),
                prop::collection::vec((0..n, 0..n), 0..n * 3),
                prop::collection::vec(0..n, 1..4),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_fixpoint_oracle((u, m, edges, seeds) in arb_graph()) {
            let g = graph_of(&u, &m, &edges);
            let got = expand_structural(&seeds, &g);
            let (f, mods) = fixpoint_oracle(u.len(), &u, &m, &edges, &seeds);
            prop_assert_eq!(got.functions.keys().copied().collect::<BTreeSet<_>>(), f);
            prop_assert_eq!(got.modifiers.keys().copied().collect::<BTreeSet<_>>(), mods);
        }

        #[test]
        fn monotone_in_seeds((u, m, edges, seeds) in arb_graph(), extra in 0usize..20) {
            let g = graph_of(&u, &m, &edges);
            let small = expand_structural(&seeds, &g);
            let mut more = seeds.clone();
            more.push(extra % u.len());
            let big = expand_structural(&more, &g);
            prop_assert!(small.functions.keys().all(|k| big.functions.contains_key(k)));
            prop_assert!(small.modifiers.keys().all(|k| big.modifiers.contains_key(k)));
        }

        #[test]
        fn every_included_function_has_its_modifiers((u, m, edges, seeds) in arb_graph()) {
            let g = graph_of(&u, &m, &edges);
            let e = expand_structural(&seeds, &g);
            for f in e.functions.keys() {
                for md in &g.node(*f).modifiers {
                    prop_assert!(e.modifiers.contains_key(md));
                }
            }
        }

        #[test]
        fn distance_has_a_cause_one_hop_closer((u, m, edges, seeds) in arb_graph()) {
            let g = graph_of(&u, &m, &edges);
            let e = expand_structural(&seeds, &g);
            for (&f, &d) in &e.functions {
                if d >= 2 {
                    let has_cause = g.callers(f).iter().any(|c| e.functions.get(c) == Some(&(d - 1)));
                    prop_assert!(has_cause, "node {} at {} lacks a cause", f, d);
                }
            }
        }
    }
}
