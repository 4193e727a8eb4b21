//! Port-labeled directed multigraphs: the network model, test-family
//! generators, and the independent oracles used to check the protocol.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A port number, `1..=delta`.
pub type Port = u8;

/// One wire: `src.out_port -> dst.in_port`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub out_port: Port,
    pub dst: usize,
    pub in_port: Port,
}

impl Edge {
    pub fn new(src: usize, out_port: Port, dst: usize, in_port: Port) -> Self {
        Edge { src, out_port, dst, in_port }
    }
}

impl Serialize for Edge {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.src, self.out_port as usize, self.dst, self.in_port as usize].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Edge {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [src, o, dst, i] = <[usize; 4]>::deserialize(d)?;
        let port = |p: usize| {
            u8::try_from(p).map_err(|_| serde::de::Error::custom(format!("port {p} out of range")))
        };
        Ok(Edge::new(src, port(o)?, dst, port(i)?))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("degree bound must be at least 2, got {0}")]
    DeltaTooSmall(usize),
    #[error("degree bound {0} exceeds the supported maximum of 8")]
    DeltaTooLarge(usize),
    #[error("tree depth must be at least 1")]
    BadDepth,
    #[error("leaf order is not a permutation of 1..={0}")]
    BadPermutation(usize),
    #[error("node {dst} is unreachable from node {src}")]
    Unreachable { src: usize, dst: usize },
    #[error("source and destination are both node {0}")]
    SameEndpoints(usize),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("graph json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for GraphError {
    fn from(e: serde_json::Error) -> Self {
        GraphError::Json(e.to_string())
    }
}

/// Largest degree bound the fixed-width node encodings support.
pub const MAX_DELTA: usize = 8;

/// A strongly connected, port-labeled directed multigraph with a root.
///
/// Nodes are `0..nodes`; ports are numbered from 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortGraph {
    pub delta: usize,
    pub root: usize,
    pub nodes: usize,
    pub edges: Vec<Edge>,
}

/// One invariant violation found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    TooFewNodes,
    DeltaOutOfRange,
    RootOutOfRange,
    NodeOutOfRange(Edge),
    PortOutOfRange(Edge),
    SelfLoop(Edge),
    OutPortReused { node: usize, port: Port },
    InPortReused { node: usize, port: Port },
    NoInPort(usize),
    NoOutPort(usize),
    NotStronglyConnected,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewNodes => write!(f, "fewer than 2 nodes"),
            Violation::DeltaOutOfRange => write!(f, "degree bound outside 2..={MAX_DELTA}"),
            Violation::RootOutOfRange => write!(f, "root index out of range"),
            Violation::NodeOutOfRange(e) => write!(f, "edge {e:?} names a missing node"),
            Violation::PortOutOfRange(e) => write!(f, "edge {e:?} uses a port outside 1..=delta"),
            Violation::SelfLoop(e) => write!(f, "self-loop {e:?}"),
            Violation::OutPortReused { node, port } => {
                write!(f, "port reuse: out-port {port} of node {node} has several wires")
            }
            Violation::InPortReused { node, port } => {
                write!(f, "port reuse: in-port {port} of node {node} has several wires")
            }
            Violation::NoInPort(n) => write!(f, "node {n} has no connected in-port"),
            Violation::NoOutPort(n) => write!(f, "node {n} has no connected out-port"),
            Violation::NotStronglyConnected => write!(f, "not strongly connected"),
        }
    }
}

/// Result of [`validate`]; empty means the graph is a legal network.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Checks every network-model precondition and reports all violations.
pub fn validate(g: &PortGraph) -> ValidationReport {
    let mut v = Vec::new();
    if g.nodes < 2 {
        v.push(Violation::TooFewNodes);
    }
    if g.delta < 2 || g.delta > MAX_DELTA {
        v.push(Violation::DeltaOutOfRange);
    }
    if g.root >= g.nodes {
        v.push(Violation::RootOutOfRange);
    }
    let mut out_used = vec![vec![false; g.delta + 1]; g.nodes];
    let mut in_used = vec![vec![false; g.delta + 1]; g.nodes];
    for e in &g.edges {
        if e.src >= g.nodes || e.dst >= g.nodes {
            v.push(Violation::NodeOutOfRange(*e));
            continue;
        }
        let ports_ok = |p: Port| p >= 1 && (p as usize) <= g.delta;
        if !ports_ok(e.out_port) || !ports_ok(e.in_port) {
            v.push(Violation::PortOutOfRange(*e));
            continue;
        }
        if e.src == e.dst {
            v.push(Violation::SelfLoop(*e));
        }
        let o = &mut out_used[e.src][e.out_port as usize];
        if *o {
            v.push(Violation::OutPortReused { node: e.src, port: e.out_port });
        }
        *o = true;
        let i = &mut in_used[e.dst][e.in_port as usize];
        if *i {
            v.push(Violation::InPortReused { node: e.dst, port: e.in_port });
        }
        *i = true;
    }
    for n in 0..g.nodes {
        if !in_used[n].iter().any(|&b| b) {
            v.push(Violation::NoInPort(n));
        }
        if !out_used[n].iter().any(|&b| b) {
            v.push(Violation::NoOutPort(n));
        }
    }
    if g.nodes > 0 && !strongly_connected(g) {
        v.push(Violation::NotStronglyConnected);
    }
    ValidationReport { violations: v }
}

fn reach_count(n: usize, adj: &[Vec<usize>]) -> usize {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count
}

fn strongly_connected(g: &PortGraph) -> bool {
    let mut fwd = vec![Vec::new(); g.nodes];
    let mut rev = vec![Vec::new(); g.nodes];
    for e in g.edges.iter().filter(|e| e.src < g.nodes && e.dst < g.nodes) {
        fwd[e.src].push(e.dst);
        rev[e.dst].push(e.src);
    }
    reach_count(g.nodes, &fwd) == g.nodes && reach_count(g.nodes, &rev) == g.nodes
}

impl PortGraph {
    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    /// Edge leaving `node` through `port`, if that port is wired.
    pub fn out_edge(&self, node: usize, port: Port) -> Option<&Edge> {
        self.edges.iter().find(|e| e.src == node && e.out_port == port)
    }

    /// All-pairs directed diameter (maximum shortest-path length).
    pub fn diameter(&self) -> usize {
        let adj = self.adjacency();
        (0..self.nodes)
            .map(|s| bfs_distances(&adj, s).into_iter().flatten().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for e in &self.edges {
            adj[e.src].push(e.dst);
        }
        adj
    }

    /// Graphviz rendering with `o<i>/i<j>` edge labels.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph network {\n");
        for n in 0..self.nodes {
            if n == self.root {
                s.push_str(&format!("  {n} [shape=doublecircle];\n"));
            } else {
                s.push_str(&format!("  {n};\n"));
            }
        }
        for e in &self.edges {
            s.push_str(&format!(
                "  {} -> {} [label=\"o{}/i{}\"];\n",
                e.src, e.dst, e.out_port, e.in_port
            ));
        }
        s.push_str("}\n");
        s
    }

    /// Returns a copy with node ids renamed by `perm` (old id -> new id).
    pub fn relabeled(&self, perm: &[usize]) -> PortGraph {
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge::new(perm[e.src], e.out_port, perm[e.dst], e.in_port))
            .collect();
        edges.sort();
        PortGraph { delta: self.delta, root: perm[self.root], nodes: self.nodes, edges }
    }
}

fn bfs_distances(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap();
        for &w in &adj[u] {
            if dist[w].is_none() {
                dist[w] = Some(du + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

fn check_params(n: usize, delta: usize) -> Result<(), GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    if delta < 2 {
        return Err(GraphError::DeltaTooSmall(delta));
    }
    if delta > MAX_DELTA {
        return Err(GraphError::DeltaTooLarge(delta));
    }
    Ok(())
}

/// Bit-reproducible random strongly connected network: a shuffled
/// Hamiltonian backbone cycle plus random extra wires while ports last.
/// Ports are handed out lowest-free-first in construction order; node 0 is
/// the root.
pub fn random_strongly_connected(n: usize, delta: usize, seed: u64) -> Result<PortGraph, GraphError> {
    check_params(n, delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut next_out = vec![1u8; n];
    let mut next_in = vec![1u8; n];
    let mut edges = Vec::new();
    let mut wire = |s: usize, d: usize, edges: &mut Vec<Edge>| {
        let e = Edge::new(s, next_out[s], d, next_in[d]);
        next_out[s] += 1;
        next_in[d] += 1;
        edges.push(e);
    };
    for k in 0..n {
        wire(order[k], order[(k + 1) % n], &mut edges);
    }
    let attempts = n * (delta - 1);
    for _ in 0..attempts {
        let s = rng.gen_range(0..n);
        let d = rng.gen_range(0..n);
        if s == d {
            continue;
        }
        let has_out = edges.iter().filter(|e| e.src == s).count() < delta;
        let has_in = edges.iter().filter(|e| e.dst == d).count() < delta;
        if has_out && has_in {
            wire(s, d, &mut edges);
        }
    }
    Ok(PortGraph { delta, root: 0, nodes: n, edges })
}

/// A directed cycle `0 -> 1 -> ... -> n-1 -> 0` on port 1 everywhere.
pub fn directed_cycle(n: usize) -> Result<PortGraph, GraphError> {
    check_params(n, 2)?;
    let edges = (0..n).map(|k| Edge::new(k, 1, (k + 1) % n, 1)).collect();
    Ok(PortGraph { delta: 2, root: 0, nodes: n, edges })
}

/// Full binary tree of the given depth with a wire each way along every
/// tree link, plus a simple directed loop through the leaves in
/// `leaf_order` (1-based leaf numbers, left to right).
///
/// Node ids are heap-ordered: 0 is the root (and network root), the
/// children of `v` are `2v+1` and `2v+2`. Parents reach children through
/// out-ports 1/2 and hear back on in-ports 1/2; a child's wire to its
/// parent uses its out-port 1 (leaves) or 3 (internal), arriving from the
/// parent on in-port 1 (leaves) or 3 (internal). Leaf loop wires use port 2
/// on both ends.
pub fn tree_loop_family(depth: usize, leaf_order: &[usize]) -> Result<PortGraph, GraphError> {
    if depth == 0 || depth > 16 {
        return Err(GraphError::BadDepth);
    }
    let leaves = 1usize << depth;
    let mut seen = vec![false; leaves + 1];
    if leaf_order.len() != leaves
        || leaf_order.iter().any(|&k| k == 0 || k > leaves || std::mem::replace(&mut seen[k], true))
    {
        return Err(GraphError::BadPermutation(leaves));
    }
    let nodes = 2 * leaves - 1;
    let first_leaf = leaves - 1;
    let is_leaf = |v: usize| v >= first_leaf;
    let mut edges = Vec::new();
    for child in 1..nodes {
        let parent = (child - 1) / 2;
        let side = if child % 2 == 1 { 1 } else { 2 };
        let up = if is_leaf(child) { 1 } else { 3 };
        edges.push(Edge::new(parent, side, child, up));
        edges.push(Edge::new(child, up, parent, side));
    }
    for k in 0..leaves {
        let a = first_leaf + leaf_order[k] - 1;
        let b = first_leaf + leaf_order[(k + 1) % leaves] - 1;
        edges.push(Edge::new(a, 2, b, 2));
    }
    Ok(PortGraph { delta: 3, root: 0, nodes, edges })
}

/// A path as a start node plus `(out_port, in_port)` hops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PortPath {
    pub start: usize,
    pub hops: Vec<(Port, Port)>,
}

impl PortPath {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }
}

/// The canonical shortest path from `src` to `dst`: the route a surviving
/// growing snake takes under lowest-in-port tie-breaking.
pub fn bfs_oracle_path(g: &PortGraph, src: usize, dst: usize) -> Result<PortPath, GraphError> {
    bfs_oracle_path_with_sink(g, src, dst, None)
}

/// As [`bfs_oracle_path`], but `sink` (if any) does not relay: it never acts
/// as an interior node of a path. Models a flood in which one node
/// converts instead of forwarding.
pub fn bfs_oracle_path_with_sink(
    g: &PortGraph,
    src: usize,
    dst: usize,
    sink: Option<usize>,
) -> Result<PortPath, GraphError> {
    if src == dst {
        return Err(GraphError::SameEndpoints(src));
    }
    let parents = bfs_parent_tree(g, src, sink);
    let mut hops = Vec::new();
    let mut v = dst;
    while v != src {
        let e = parents[v].ok_or(GraphError::Unreachable { src, dst })?;
        hops.push((e.out_port, e.in_port));
        v = e.src;
    }
    hops.reverse();
    Ok(PortPath { start: src, hops })
}

/// Breadth-first parent edges from `src`: each node's parent is its
/// lowest-numbered in-port whose source lies one layer closer. `sink`
/// nodes are reached but never expanded.
pub fn bfs_parent_tree(g: &PortGraph, src: usize, sink: Option<usize>) -> Vec<Option<Edge>> {
    let mut dist = vec![usize::MAX; g.nodes];
    let mut parent: Vec<Option<Edge>> = vec![None; g.nodes];
    dist[src] = 0;
    let mut layer = vec![src];
    let mut d = 0;
    while !layer.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for &u in &layer {
            if Some(u) == sink && u != src {
                continue;
            }
            for e in g.edges.iter().filter(|e| e.src == u) {
                let w = e.dst;
                if dist[w] == usize::MAX {
                    dist[w] = d;
                    next.push(w);
                }
                if dist[w] == d && parent[w].is_none_or(|p| e.in_port < p.in_port) {
                    parent[w] = Some(*e);
                }
            }
        }
        layer = next;
    }
    parent
}

/// True iff some root-preserving bijection maps every wire of `g1` onto a
/// wire of `g2` with identical port labels. With labeled ports the mapping
/// is forced, so it is found by walking both graphs in parallel.
pub fn rooted_port_isomorphic(g1: &PortGraph, g2: &PortGraph) -> bool {
    if g1.nodes != g2.nodes || g1.edges.len() != g2.edges.len() {
        return false;
    }
    let table = |g: &PortGraph| {
        let mut t = vec![vec![None; MAX_DELTA + 1]; g.nodes];
        for e in &g.edges {
            t[e.src][e.out_port as usize] = Some((e.dst, e.in_port));
        }
        t
    };
    let (t1, t2) = (table(g1), table(g2));
    let mut fwd = vec![None; g1.nodes];
    let mut back = vec![None; g2.nodes];
    fwd[g1.root] = Some(g2.root);
    back[g2.root] = Some(g1.root);
    let mut stack = vec![g1.root];
    while let Some(u) = stack.pop() {
        let v = fwd[u].unwrap();
        for p in 1..=MAX_DELTA {
            match (t1[u][p], t2[v][p]) {
                (None, None) => {}
                (Some((x, i)), Some((y, j))) => {
                    if i != j {
                        return false;
                    }
                    match (fwd[x], back[y]) {
                        (None, None) => {
                            fwd[x] = Some(y);
                            back[y] = Some(x);
                            stack.push(x);
                        }
                        (Some(yy), Some(xx)) if yy == y && xx == x => {}
                        _ => return false,
                    }
                }
                _ => return false,
            }
        }
    }
    fwd.iter().all(Option::is_some)
}

/// Diameter helper for callers that only have edge lists.
pub fn directed_distance(g: &PortGraph, src: usize, dst: usize) -> Option<usize> {
    bfs_distances(&g.adjacency(), src)[dst]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> PortGraph {
        PortGraph {
            delta: 2,
            root: 0,
            nodes: 2,
            edges: vec![Edge::new(0, 1, 1, 1), Edge::new(1, 1, 0, 1)],
        }
    }

    #[test]
    fn two_cycle_is_valid() {
        assert!(validate(&two_cycle()).is_valid());
    }

    #[test]
    fn missing_return_edge() {
        let mut g = two_cycle();
        g.edges.pop();
        let r = validate(&g);
        assert!(r.to_string().contains("not strongly connected"), "{r}");
    }

    #[test]
    fn shared_out_port_is_reported() {
        let mut g = two_cycle();
        g.edges.push(Edge::new(0, 1, 1, 2));
        let r = validate(&g);
        assert!(r.violations.contains(&Violation::OutPortReused { node: 0, port: 1 }));
        assert!(r.to_string().contains("port reuse"));
    }

    #[test]
    fn self_loops_and_bad_ports() {
        let mut g = two_cycle();
        g.edges.push(Edge::new(0, 2, 0, 2));
        g.edges.push(Edge::new(1, 3, 0, 1));
        let r = validate(&g);
        assert!(r.violations.iter().any(|v| matches!(v, Violation::SelfLoop(_))));
        assert!(r.violations.iter().any(|v| matches!(v, Violation::PortOutOfRange(_))));
    }

    #[test]
    fn generator_rejects_bad_params() {
        assert_eq!(random_strongly_connected(1, 3, 0), Err(GraphError::TooFewNodes(1)));
        assert_eq!(random_strongly_connected(4, 1, 0), Err(GraphError::DeltaTooSmall(1)));
    }

    #[test]
    fn generator_small_and_reproducible() {
        let g = random_strongly_connected(2, 2, 0).unwrap();
        assert!(validate(&g).is_valid());
        let a = random_strongly_connected(16, 3, 7).unwrap();
        let b = random_strongly_connected(16, 3, 7).unwrap();
        assert!(validate(&a).is_valid());
        assert_eq!(a.to_json(), b.to_json());
        let c = random_strongly_connected(16, 3, 8).unwrap();
        assert_ne!(a.edges, c.edges);
    }

    #[test]
    fn tree_loop_depth_one() {
        let g = tree_loop_family(1, &[1, 2]).unwrap();
        assert_eq!(g.nodes, 3);
        assert_eq!(g.edges.len(), 6);
        assert!(validate(&g).is_valid());
        assert!(tree_loop_family(2, &[1, 2, 2, 4]).is_err());
        assert!(tree_loop_family(2, &[1, 2, 3]).is_err());
    }

    #[test]
    fn tree_loop_orders_differ() {
        let a = tree_loop_family(2, &[1, 2, 3, 4]).unwrap();
        let b = tree_loop_family(2, &[1, 3, 2, 4]).unwrap();
        assert!(validate(&a).is_valid() && validate(&b).is_valid());
        assert!(!rooted_port_isomorphic(&a, &b));
        // rotating the leaf loop names the same wires
        let c = tree_loop_family(2, &[2, 3, 4, 1]).unwrap();
        assert!(rooted_port_isomorphic(&a, &c));
    }

    #[test]
    fn oracle_single_edge() {
        let p = bfs_oracle_path(&two_cycle(), 0, 1).unwrap();
        assert_eq!(p.hops, vec![(1, 1)]);
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn oracle_lowest_in_port_tie_break() {
        // 0 -> 1 and 0 -> 2, both feed 3: 1 arrives on in-port 2, 2 on in-port 1.
        let g = PortGraph {
            delta: 3,
            root: 0,
            nodes: 4,
            edges: vec![
                Edge::new(0, 1, 1, 1),
                Edge::new(0, 2, 2, 1),
                Edge::new(1, 1, 3, 2),
                Edge::new(2, 1, 3, 1),
                Edge::new(3, 1, 0, 1),
            ],
        };
        assert!(validate(&g).is_valid());
        let p = bfs_oracle_path(&g, 0, 3).unwrap();
        assert_eq!(p.hops, vec![(2, 1), (1, 1)]);
    }

    #[test]
    fn oracle_unreachable_is_error() {
        let mut g = two_cycle();
        g.edges.pop();
        assert!(matches!(bfs_oracle_path(&g, 1, 0), Err(GraphError::Unreachable { .. })));
    }

    #[test]
    fn renaming_keeps_isomorphism() {
        let g = random_strongly_connected(10, 3, 4).unwrap();
        assert!(rooted_port_isomorphic(&g, &g));
        let mut perm: Vec<usize> = (0..10).collect();
        perm.swap(3, 7);
        assert!(rooted_port_isomorphic(&g, &g.relabeled(&perm)));
    }

    #[test]
    fn json_shape() {
        let s = two_cycle().to_json();
        assert_eq!(s, r#"{"delta":2,"root":0,"nodes":2,"edges":[[0,1,1,1],[1,1,0,1]]}"#);
        assert_eq!(PortGraph::from_json(&s).unwrap(), two_cycle());
    }

    #[test]
    fn dot_labels() {
        assert!(two_cycle().to_dot().contains("0 -> 1 [label=\"o1/i1\"]"));
    }
}
