#![allow(dead_code)]

use std::collections::BTreeSet;

use snakenet::portgraph::{Edge, PortGraph};

fn edge_set(g: &PortGraph, map: &[usize]) -> BTreeSet<Edge> {
    g.edges.iter().map(|e| Edge::new(map[e.src], e.out_port, map[e.dst], e.in_port)).collect()
}

fn next_perm(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else { return false };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Tries every relabeling of `a` that fixes the root. Only for small graphs.
pub fn brute_force_isomorphic(a: &PortGraph, b: &PortGraph) -> bool {
    if a.nodes != b.nodes || a.edges.len() != b.edges.len() {
        return false;
    }
    let target: BTreeSet<Edge> = b.edges.iter().copied().collect();
    let others_a: Vec<usize> = (0..a.nodes).filter(|&v| v != a.root).collect();
    let mut others_b: Vec<usize> = (0..b.nodes).filter(|&v| v != b.root).collect();
    loop {
        let mut map = vec![0; a.nodes];
        map[a.root] = b.root;
        for (x, y) in others_a.iter().zip(&others_b) {
            map[*x] = *y;
        }
        if edge_set(a, &map) == target {
            return true;
        }
        if !next_perm(&mut others_b) {
            return false;
        }
    }
}

/// Number of classes under `same`, by greedy partitioning.
pub fn class_count<T>(items: &[T], same: impl Fn(&T, &T) -> bool) -> usize {
    let mut reps: Vec<&T> = Vec::new();
    for x in items {
        if !reps.iter().any(|r| same(r, x)) {
            reps.push(x);
        }
    }
    reps.len()
}

/// All permutations of `1..=k`.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (1..=k).collect();
    let mut out = vec![p.clone()];
    while next_perm(&mut p) {
        out.push(p.clone());
    }
    out
}
