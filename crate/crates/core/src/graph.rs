//! Trajectory graph restoration and tracing.
//!
//! Graphs are rebuilt from ledger events on demand. Edges are directed
//! caller → callee and kept in (timestamp, ledger index) order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{Address, Hash32};
use crate::trail::AuditTrail;
use crate::trajectory::{LoggedEvent, TrajectoryId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphEdge {
    pub caller: Address,
    pub callee: Address,
    pub trajectory_id: TrajectoryId,
    pub action_type: String,
    pub timestamp: u64,
    pub ledger_index: u64,
    pub interaction_hash: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectoryGraph {
    pub nodes: BTreeSet<Address>,
    pub edges: Vec<GraphEdge>,
    pub trajectory_ids: BTreeSet<TrajectoryId>,
}

impl TrajectoryGraph {
    pub fn from_events(events: impl IntoIterator<Item = LoggedEvent>) -> Self {
        let mut g = Self::default();
        for ev in events {
            let e = ev.event;
            g.nodes.insert(e.caller);
            g.nodes.insert(e.callee);
            g.trajectory_ids.insert(e.trajectory_id);
            g.edges.push(GraphEdge {
                caller: e.caller,
                callee: e.callee,
                trajectory_id: e.trajectory_id,
                action_type: e.action_type,
                timestamp: e.timestamp,
                ledger_index: ev.ledger_index,
                interaction_hash: e.interaction_hash,
            });
        }
        g.edges.sort_by_key(|e| (e.timestamp, e.ledger_index));
        g
    }

    /// Keeps only edges belonging to `ids`; nodes shrink to surviving endpoints.
    pub fn restrict_to(&self, ids: &BTreeSet<TrajectoryId>) -> Self {
        let edges: Vec<GraphEdge> =
            self.edges.iter().filter(|e| ids.contains(&e.trajectory_id)).cloned().collect();
        let nodes = edges.iter().flat_map(|e| [e.caller, e.callee]).collect();
        let trajectory_ids = edges.iter().map(|e| e.trajectory_id).collect();
        Self { nodes, edges, trajectory_ids }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Undirected adjacency, deduplicated.
    pub fn neighbors(&self) -> BTreeMap<Address, BTreeSet<Address>> {
        let mut adj: BTreeMap<Address, BTreeSet<Address>> =
            self.nodes.iter().map(|n| (*n, BTreeSet::new())).collect();
        for e in &self.edges {
            adj.entry(e.caller).or_default().insert(e.callee);
            adj.entry(e.callee).or_default().insert(e.caller);
        }
        adj
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        if let Some(e) = g.edges.iter().find(|e| !g.nodes.contains(&e.caller) || !g.nodes.contains(&e.callee)) {
            return Err(Error::BadInput(format!("edge {} references a node not in the graph", e.ledger_index)));
        }
        Ok(g)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph trajectory {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}@{}\"];",
                e.caller,
                e.callee,
                e.action_type.replace('"', "\\\""),
                e.timestamp
            );
        }
        out.push_str("}\n");
        out
    }

    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Dot => self.to_dot(),
            ExportFormat::Json => self.to_json(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceResult {
    pub origin: Address,
    pub reached: BTreeSet<Address>,
    pub hop_distance: BTreeMap<Address, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ForkPoint {
    pub node: Address,
    pub timestamp: u64,
    pub out_edges: Vec<GraphEdge>,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Reverse,
}

fn bfs(g: &TrajectoryGraph, origin: &Address, dir: Direction) -> Result<TraceResult> {
    if !g.nodes.contains(origin) {
        return Err(Error::UnknownNode(origin.did()));
    }
    let mut adj: BTreeMap<Address, BTreeSet<Address>> = BTreeMap::new();
    for e in &g.edges {
        let (from, to) = match dir {
            Direction::Forward => (e.caller, e.callee),
            Direction::Reverse => (e.callee, e.caller),
        };
        adj.entry(from).or_default().insert(to);
    }
    let mut hop_distance = BTreeMap::new();
    let mut seen = BTreeSet::from([*origin]);
    let mut queue = VecDeque::from([(*origin, 0u32)]);
    while let Some((node, d)) = queue.pop_front() {
        for next in adj.get(&node).into_iter().flatten() {
            if seen.insert(*next) {
                hop_distance.insert(*next, d + 1);
                queue.push_back((*next, d + 1));
            }
        }
    }
    Ok(TraceResult { origin: *origin, reached: hop_distance.keys().copied().collect(), hop_distance })
}

/// Ancestors of `node` (reverse BFS) with minimal hop counts.
pub fn trace_source(g: &TrajectoryGraph, node: &Address) -> Result<TraceResult> {
    bfs(g, node, Direction::Reverse)
}

/// Descendants of `node` (forward BFS) with minimal hop counts.
pub fn propagation(g: &TrajectoryGraph, node: &Address) -> Result<TraceResult> {
    bfs(g, node, Direction::Forward)
}

/// One fork per (caller, timestamp) group of two or more edges.
pub fn detect_forks(g: &TrajectoryGraph) -> Vec<ForkPoint> {
    let mut groups: BTreeMap<(u64, Address), Vec<GraphEdge>> = BTreeMap::new();
    for e in &g.edges {
        groups.entry((e.timestamp, e.caller)).or_default().push(e.clone());
    }
    groups
        .into_iter()
        .filter(|(_, edges)| edges.len() >= 2)
        .map(|((timestamp, node), out_edges)| ForkPoint { node, timestamp, out_edges })
        .collect()
}

impl AuditTrail {
    /// Graph of one trajectory; `NotFound` if the id was never issued.
    pub fn restore(&self, trajectory_id: &TrajectoryId) -> Result<TrajectoryGraph> {
        if !self.trajectories.is_issued(trajectory_id) {
            return Err(Error::NotFound(format!("trajectory {trajectory_id}")));
        }
        let mut g = TrajectoryGraph::from_events(self.interactions(trajectory_id));
        g.trajectory_ids.insert(*trajectory_id);
        Ok(g)
    }

    /// Merged graph of every interaction stamped within `[t0, t1]`.
    pub fn restore_interval(&self, t0: u64, t1: u64) -> Result<TrajectoryGraph> {
        if t0 > t1 {
            return Err(Error::BadInterval(t0, t1));
        }
        Ok(TrajectoryGraph::from_events(self.interactions_between(t0, t1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::tests::Net;

    /// Reachability by repeated boolean matrix squaring over (I + A).
    fn closure(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let mut m = vec![vec![false; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b) in edges {
            m[a][b] = true;
        }
        let mut steps = 1;
        while steps < n {
            let mut next = vec![vec![false; n]; n];
            for i in 0..n {
                for k in 0..n {
                    if m[i][k] {
                        for j in 0..n {
                            next[i][j] |= m[k][j];
                        }
                    }
                }
            }
            m = next;
            steps *= 2;
        }
        m
    }

    fn sequential() -> (Net, TrajectoryId) {
        let mut net = Net::new(4);
        let id = net.trail.issue_trajectory_id(&net.ca, &net.did(0)).unwrap();
        for i in 0..3 {
            net.call(&id, i, &[i + 1], true);
        }
        (net, id)
    }

    fn parallel() -> (Net, TrajectoryId) {
        let mut net = Net::new(4);
        let id = net.trail.issue_trajectory_id(&net.ca, &net.did(0)).unwrap();
        net.call(&id, 0, &[1, 2], true);
        net.call(&id, 1, &[3], true);
        net.call(&id, 2, &[3], true);
        (net, id)
    }

    #[test]
    fn restore_sequential() {
        let (net, id) = sequential();
        let g = net.trail.restore(&id).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len()), (4, 3));
        assert!(detect_forks(&g).is_empty());
    }

    #[test]
    fn restore_parallel() {
        let (net, id) = parallel();
        let g = net.trail.restore(&id).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len()), (4, 4));
        let forks = detect_forks(&g);
        assert_eq!(forks.len(), 1);
        assert_eq!(forks[0].node, net.did(0));
        assert_eq!(forks[0].out_edges.len(), 2);
    }

    #[test]
    fn restore_empty_and_unknown() {
        let mut net = Net::new(1);
        let id = net.trail.issue_trajectory_id(&net.ca, &net.did(0)).unwrap();
        let g = net.trail.restore(&id).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
        assert!(matches!(net.trail.restore(&TrajectoryId::new([0; 8], 42)), Err(Error::NotFound(_))));
    }

    #[test]
    fn three_way_fork() {
        let mut net = Net::new(4);
        let id = net.trail.issue_trajectory_id(&net.ca, &net.did(0)).unwrap();
        net.call(&id, 0, &[1, 2, 3], false);
        let forks = detect_forks(&net.trail.restore(&id).unwrap());
        assert_eq!(forks.len(), 1);
        assert_eq!(forks[0].out_edges.len(), 3);
    }

    #[test]
    fn trace_sequential() {
        let (net, id) = sequential();
        let g = net.trail.restore(&id).unwrap();
        let r = trace_source(&g, &net.did(3)).unwrap();
        // oracle: closure column of D
        let c = closure(4, &[(0, 1), (1, 2), (2, 3)]);
        let expected: BTreeSet<_> = (0..3).filter(|i| c[*i][3]).map(|i| net.did(i)).collect();
        assert_eq!(r.reached, expected);
        assert_eq!(r.hop_distance[&net.did(2)], 1);
        assert_eq!(r.hop_distance[&net.did(1)], 2);
        assert_eq!(r.hop_distance[&net.did(0)], 3);
        assert!(trace_source(&g, &net.did(0)).unwrap().reached.is_empty());

        let fwd = propagation(&g, &net.did(0)).unwrap();
        assert_eq!(fwd.reached, (1..4).map(|i| net.did(i)).collect());
        assert!(propagation(&g, &net.did(3)).unwrap().reached.is_empty());
    }

    #[test]
    fn trace_parallel() {
        let (net, id) = parallel();
        let g = net.trail.restore(&id).unwrap();
        let c = closure(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let anc: BTreeSet<_> = (0..3).filter(|i| c[*i][3]).map(|i| net.did(i)).collect();
        assert_eq!(trace_source(&g, &net.did(3)).unwrap().reached, anc);
        let desc: BTreeSet<_> = (1..4).filter(|j| c[0][*j]).map(|j| net.did(j)).collect();
        assert_eq!(propagation(&g, &net.did(0)).unwrap().reached, desc);
    }

    #[test]
    fn trace_unknown_node() {
        let (net, id) = sequential();
        let g = net.trail.restore(&id).unwrap();
        let stranger = crate::ledger::Signer::from_seed([90; 32]).address();
        assert!(matches!(trace_source(&g, &stranger), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn cyclic_interval_graph_terminates() {
        let mut net = Net::new(2);
        let id = net.trail.issue_trajectory_id(&net.ca, &net.did(0)).unwrap();
        net.call(&id, 0, &[1], false);
        net.call(&id, 1, &[0], false);
        let g = net.trail.restore_interval(0, net.trail.now()).unwrap();
        let r = propagation(&g, &net.did(0)).unwrap();
        assert_eq!(r.reached, BTreeSet::from([net.did(1)]));
    }

    #[test]
    fn interval_merge() {
        let mut net = Net::new(3);
        let x = net.trail.issue_trajectory_id(&net.ca, &net.did(0)).unwrap();
        let y = net.trail.issue_trajectory_id(&net.ca, &net.did(2)).unwrap();
        net.call(&x, 0, &[1], true);
        let mid = net.trail.now();
        net.call(&y, 2, &[1], true);
        let all = net.trail.restore_interval(0, net.trail.now()).unwrap();
        // oracle: set union of per-id graphs
        let gx = net.trail.restore(&x).unwrap();
        let gy = net.trail.restore(&y).unwrap();
        let union: BTreeSet<_> = gx.nodes.union(&gy.nodes).copied().collect();
        assert_eq!(all.nodes, union);
        assert_eq!(all.nodes.len(), 3);
        assert_eq!(all.edges.len(), gx.edges.len() + gy.edges.len());
        assert_eq!(all.trajectory_ids, BTreeSet::from([x, y]));

        // tick `mid` carries only a receipt
        let gap = net.trail.restore_interval(mid, mid).unwrap();
        assert!(gap.is_empty());
        assert_eq!(net.trail.restore_interval(mid + 1, mid + 1).unwrap().edges.len(), 1);
        assert!(matches!(net.trail.restore_interval(5, 4), Err(Error::BadInterval(5, 4))));
    }

    #[test]
    fn exports() {
        let (net, id) = sequential();
        let g = net.trail.restore(&id).unwrap();
        let dot = g.to_dot();
        assert_eq!(dot.matches(" -> ").count(), 3);
        assert!(TrajectoryGraph::default().to_dot().starts_with("digraph trajectory {"));
        let back = TrajectoryGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        let edge = &v["edges"][0];
        for key in ["caller", "callee", "trajectoryId", "actionType", "timestamp", "ledgerIndex"] {
            assert!(edge.get(key).is_some(), "missing {key}");
        }
    }
}
