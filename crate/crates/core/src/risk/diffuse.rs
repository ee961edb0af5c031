//! Worklist risk-level diffusion.
//!
//! Starting from the risk nodes, each active source `s` offers every
//! undirected neighbour `v` the candidate level
//! `floor(beta(v) * level(s) / 1000)`. A candidate that beats `v`'s current
//! level replaces it and makes `v` a source in turn; a zero candidate ends
//! that branch. Levels only ever rise, so the process reaches a fixpoint.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::Serialize;

use super::{Beta, Erl};

/// Risk level a neighbour absorbs from `source` given its own attenuation.
pub fn attenuate(source: Erl, beta: Beta) -> Erl {
    let level = u32::from(beta.per_mille()) * u32::from(source.level()) / 1000;
    Erl::new(level as u8).expect("attenuated level never exceeds its source")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelUpdate {
    pub old: Erl,
    pub new: Erl,
    /// Undirected hop distance to the nearest risk node.
    pub hops: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diffusion<N> {
    /// Nodes whose level rose; unchanged nodes are omitted.
    pub updates: BTreeMap<N, LevelUpdate>,
    /// Nodes in the order they were processed as sources.
    pub visited_order: Vec<N>,
}

impl<N> Default for Diffusion<N> {
    fn default() -> Self {
        Self { updates: BTreeMap::new(), visited_order: Vec::new() }
    }
}

fn hop_distances<N: Ord + Copy>(adj: &BTreeMap<N, BTreeSet<N>>, seeds: &BTreeSet<N>) -> BTreeMap<N, u32> {
    let mut dist: BTreeMap<N, u32> = seeds.iter().map(|s| (*s, 0)).collect();
    let mut queue: VecDeque<N> = seeds.iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        let d = dist[&n];
        for m in adj.get(&n).into_iter().flatten() {
            if !dist.contains_key(m) {
                dist.insert(*m, d + 1);
                queue.push_back(*m);
            }
        }
    }
    dist
}

/// Runs diffusion over an undirected adjacency map. Every seed must be a
/// key of `adj`. Ties in the max-priority worklist break towards the
/// smaller node id, so the processing order is reproducible.
pub fn diffuse<N, L, B>(adj: &BTreeMap<N, BTreeSet<N>>, seeds: &BTreeSet<N>, level_of: L, beta_of: B) -> Diffusion<N>
where
    N: Ord + Copy,
    L: Fn(&N) -> Erl,
    B: Fn(&N) -> Beta,
{
    let initial: BTreeMap<N, Erl> = adj.keys().map(|n| (*n, level_of(n))).collect();
    let mut level = initial.clone();
    let mut heap: BinaryHeap<(Erl, Reverse<N>)> =
        seeds.iter().map(|s| (level[s], Reverse(*s))).collect();
    let mut visited_order = Vec::new();

    while let Some((l, Reverse(src))) = heap.pop() {
        if l != level[&src] {
            continue;
        }
        visited_order.push(src);
        for nb in adj.get(&src).into_iter().flatten() {
            let candidate = attenuate(l, beta_of(nb));
            if candidate == Erl::ZERO {
                continue;
            }
            let current = level.get_mut(nb).expect("neighbour is a node");
            if candidate > *current {
                *current = candidate;
                heap.push((candidate, Reverse(*nb)));
            }
        }
    }

    let hops = hop_distances(adj, seeds);
    let updates = level
        .iter()
        .filter(|(n, l)| **l > initial[*n])
        .map(|(n, l)| {
            (*n, LevelUpdate { old: initial[n], new: *l, hops: hops.get(n).copied().unwrap_or(u32::MAX) })
        })
        .collect();
    Diffusion { updates, visited_order }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn erl(v: u8) -> Erl {
        Erl::new(v).unwrap()
    }

    fn beta(v: u16) -> Beta {
        Beta::from_per_mille(v).unwrap()
    }

    fn undirected(n: usize, edges: &[(usize, usize)]) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = (0..n).map(|i| (i, BTreeSet::new())).collect();
        for &(a, b) in edges {
            adj.get_mut(&a).unwrap().insert(b);
            adj.get_mut(&b).unwrap().insert(a);
        }
        adj
    }

    /// Simultaneous-update fixpoint: every node takes the max of its level
    /// and what each active neighbour offers, until nothing changes.
    fn brute_force(
        adj: &BTreeMap<usize, BTreeSet<usize>>,
        seeds: &BTreeSet<usize>,
        init: &[u8],
        betas: &[u16],
    ) -> Vec<u8> {
        let mut lv = init.to_vec();
        loop {
            let active: Vec<bool> = (0..lv.len()).map(|i| seeds.contains(&i) || lv[i] > init[i]).collect();
            let mut next = lv.clone();
            for (v, nbs) in adj {
                for s in nbs {
                    if active[*s] {
                        let c = (u32::from(betas[*v]) * u32::from(lv[*s]) / 1000) as u8;
                        next[*v] = next[*v].max(c);
                    }
                }
            }
            if next == lv {
                return lv;
            }
            lv = next;
        }
    }

    #[test]
    fn empty_seed_set() {
        let adj = undirected(3, &[(0, 1), (1, 2)]);
        let d = diffuse(&adj, &BTreeSet::new(), |_| erl(5), |_| Beta::HALF);
        assert!(d.updates.is_empty());
    }

    #[test]
    fn chain_decays_to_zero() {
        let adj = undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let init = [8, 0, 0, 0, 0];
        let d = diffuse(&adj, &BTreeSet::from([0]), |n| erl(init[*n]), |_| Beta::HALF);
        let got: Vec<(usize, u8, u32)> = d.updates.iter().map(|(n, u)| (*n, u.new.level(), u.hops)).collect();
        assert_eq!(got, vec![(1, 4, 1), (2, 2, 2), (3, 1, 3)]);
        let oracle = brute_force(&adj, &BTreeSet::from([0]), &init, &[500; 5]);
        assert_eq!(oracle, vec![8, 4, 2, 1, 0]);
    }

    #[test]
    fn diamond_takes_max_over_sources() {
        // 0 -> a(1), b(2); a, b -> c(3)
        let adj = undirected(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let betas = [500u16, 500, 250, 500];
        let init = [8, 0, 0, 0];
        let d = diffuse(&adj, &BTreeSet::from([0]), |n| erl(init[*n]), |n| beta(betas[*n]));
        let levels: Vec<u8> = (1..4).map(|n| d.updates[&n].new.level()).collect();
        assert_eq!(levels, vec![4, 2, 2]);
        assert_eq!(brute_force(&adj, &BTreeSet::from([0]), &init, &betas), vec![8, 4, 2, 2]);
    }

    #[test]
    fn processing_order_prefers_higher_levels() {
        let adj = undirected(3, &[(0, 1), (1, 2)]);
        let init = [8, 0, 9];
        let d = diffuse(&adj, &BTreeSet::from([0, 2]), |n| erl(init[*n]), |_| Beta::HALF);
        assert_eq!(d.visited_order[0], 2);
        assert_eq!(d.updates[&1].new.level(), 4);
    }

    #[test]
    fn full_beta_risk_node_can_be_raised() {
        let adj = undirected(2, &[(0, 1)]);
        let init = [3, 8];
        let d = diffuse(&adj, &BTreeSet::from([0, 1]), |n| erl(init[*n]), |_| beta(1000));
        assert_eq!(d.updates[&0].new.level(), 8);
        assert_eq!(d.updates[&0].hops, 0);
    }

    #[test]
    fn attenuation_floor() {
        assert_eq!(attenuate(erl(1), Beta::HALF), Erl::ZERO);
        assert_eq!(attenuate(erl(10), beta(999)), erl(9));
        assert_eq!(attenuate(erl(10), beta(1000)), erl(10));
    }
}
