//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use aat_core::graph::GraphEdge;
use aat_core::ledger::{Address, Hash32, Ledger, LedgerRecord, RecordKind, Signer};
use aat_core::{TrajectoryGraph, TrajectoryId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` records from three authors with random kinds and payloads, one
/// append per record.
pub fn random_ledger(rng: &mut impl Rng, n: usize) -> Ledger {
    let authors: Vec<Signer> = (0..3).map(|_| Signer::generate(rng)).collect();
    let mut ledger = Ledger::in_memory();
    for _ in 0..n {
        let author = &authors[rng.gen_range(0..authors.len())];
        let kind = RecordKind::ALL[rng.gen_range(0..RecordKind::ALL.len())];
        let len = rng.gen_range(0..48);
        let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        if rng.gen_bool(0.2) {
            ledger.advance_clock(rng.gen_range(1..4));
        }
        ledger.append(author, kind, payload).unwrap();
    }
    ledger
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Index,
    Kind,
    Author,
    PublicKey,
    Payload,
    Timestamp,
    PrevHash,
    RecordHash,
    Signature,
}

pub const FIELDS: [Field; 9] = [
    Field::Index,
    Field::Kind,
    Field::Author,
    Field::PublicKey,
    Field::Payload,
    Field::Timestamp,
    Field::PrevHash,
    Field::RecordHash,
    Field::Signature,
];

/// Changes exactly one field of `rec`; `r` picks the byte and bit.
pub fn mutate(rec: &mut LedgerRecord, field: Field, r: u64) {
    let bit = 1u8 << (r % 8);
    let at = (r / 8) as usize;
    match field {
        Field::Index => rec.index ^= 1 << (r % 63),
        Field::Kind => {
            let k = rec.kind as usize;
            rec.kind = RecordKind::ALL[(k + 1 + at % 10) % RecordKind::ALL.len()];
        }
        Field::Author => rec.author.0[at % 32] ^= bit,
        Field::PublicKey => rec.public_key[at % 32] ^= bit,
        Field::Payload => {
            if rec.payload.is_empty() {
                rec.payload.push(bit);
            } else {
                let i = at % rec.payload.len();
                rec.payload[i] ^= bit;
            }
        }
        Field::Timestamp => rec.timestamp ^= 1 << (r % 63),
        Field::PrevHash => rec.prev_hash.0[at % 32] ^= bit,
        Field::RecordHash => rec.record_hash.0[at % 32] ^= bit,
        Field::Signature => rec.signature[at % 64] ^= bit,
    }
}

/// Boolean reachability matrix by repeated squaring.
pub fn closure(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut m = vec![vec![false; n]; n];
    for &(a, b) in edges {
        m[a][b] = true;
    }
    loop {
        let mut next = m.clone();
        for i in 0..n {
            for k in 0..n {
                if m[i][k] {
                    for j in 0..n {
                        if m[k][j] {
                            next[i][j] = true;
                        }
                    }
                }
            }
        }
        if next == m {
            return m;
        }
        m = next;
    }
}

/// Random DAG on `n` nodes: edges only go from lower to higher index.
pub fn random_dag(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let p = rng.gen_range(0.1..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

pub fn node(i: usize) -> Address {
    let mut a = [0u8; 32];
    a[..8].copy_from_slice(&(i as u64).to_be_bytes());
    Address(a)
}

/// Graph whose edges all share one trajectory, in edge-list order.
pub fn graph_of(n: usize, edges: &[(usize, usize)]) -> TrajectoryGraph {
    let id = TrajectoryId::new([7; 8], 1);
    TrajectoryGraph {
        nodes: (0..n).map(node).collect(),
        edges: edges
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| GraphEdge {
                caller: node(a),
                callee: node(b),
                trajectory_id: id,
                action_type: "call".into(),
                timestamp: k as u64 + 1,
                ledger_index: k as u64 + 1,
                interaction_hash: Hash32::of(&[a as u8, b as u8]),
            })
            .collect(),
        trajectory_ids: BTreeSet::from([id]),
    }
}

pub fn undirected(n: usize, edges: &[(usize, usize)]) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = (0..n).map(|i| (i, BTreeSet::new())).collect();
    for &(a, b) in edges {
        adj.get_mut(&a).unwrap().insert(b);
        adj.get_mut(&b).unwrap().insert(a);
    }
    adj
}

/// Any undirected graph: random edges, cycles allowed.
pub fn random_graph(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    let m = rng.gen_range(0..=n * 2);
    (0..m)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .filter(|(a, b)| a != b)
        .collect()
}

/// Random tree: each node after the first hangs off an earlier one.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (rng.gen_range(0..i), i)).collect()
}

/// Simultaneous iteration of
/// `level[v] = max(level[v], max over neighbours s of floor(beta[v] * level[s] / 1000))`
/// over every neighbour, until nothing changes.
pub fn fixpoint(adj: &BTreeMap<usize, BTreeSet<usize>>, levels: &[u8], betas: &[u16]) -> Vec<u8> {
    let mut lv = levels.to_vec();
    loop {
        let mut next = lv.clone();
        for (v, nbs) in adj {
            for s in nbs {
                let c = (u32::from(betas[*v]) * u32::from(lv[*s]) / 1000) as u8;
                next[*v] = next[*v].max(c);
            }
        }
        if next == lv {
            return lv;
        }
        lv = next;
    }
}

/// Undirected BFS distances from a set of seeds.
pub fn bfs_hops(adj: &BTreeMap<usize, BTreeSet<usize>>, seeds: &BTreeSet<usize>) -> BTreeMap<usize, u32> {
    let mut dist: BTreeMap<usize, u32> = seeds.iter().map(|s| (*s, 0)).collect();
    let mut frontier: Vec<usize> = seeds.iter().copied().collect();
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for n in frontier {
            for m in &adj[&n] {
                if !dist.contains_key(m) {
                    dist.insert(*m, d);
                    next.push(*m);
                }
            }
        }
        frontier = next;
    }
    dist
}
