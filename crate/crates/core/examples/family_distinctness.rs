//! Rearranging the leaves of the tree-loop family gives different networks.
//! Counts the isomorphism classes over all leaf orders of depth 2.
//!
//! cargo run --example family_distinctness

use snakenet::portgraph::{rooted_port_isomorphic, tree_loop_family, PortGraph};

fn orders(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in orders(k - 1) {
        for i in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(i, k);
            out.push(p);
        }
    }
    out
}

fn main() {
    let all: Vec<(Vec<usize>, PortGraph)> =
        orders(4).into_iter().map(|p| (p.clone(), tree_loop_family(2, &p).unwrap())).collect();
    let mut classes: Vec<Vec<&Vec<usize>>> = Vec::new();
    for (p, g) in &all {
        match classes.iter_mut().find(|c| rooted_port_isomorphic(&all.iter().find(|x| &x.0 == c[0]).unwrap().1, g)) {
            Some(c) => c.push(p),
            None => classes.push(vec![p]),
        }
    }
    println!("{} leaf orders, {} distinct networks", all.len(), classes.len());
    for c in &classes {
        println!("  {:?}", c);
    }
}
