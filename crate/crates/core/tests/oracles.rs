mod common;

use common::{brute_force_isomorphic, permutations};
use proptest::prelude::*;
use snakenet::portgraph::{
    bfs_oracle_path, directed_cycle, random_strongly_connected, rooted_port_isomorphic, tree_loop_family,
};

#[test]
fn brute_force_agrees_on_tree_loops() {
    let graphs: Vec<_> = permutations(4).iter().map(|p| tree_loop_family(2, p).unwrap()).collect();
    for a in &graphs[..8] {
        for b in &graphs {
            assert_eq!(rooted_port_isomorphic(a, b), brute_force_isomorphic(a, b));
        }
    }
}

#[test]
fn permutation_helper_counts() {
    assert_eq!(permutations(4).len(), 24);
    assert_eq!(permutations(1), vec![vec![1]]);
}

#[test]
fn cycle_paths_go_round() {
    let g = directed_cycle(5).unwrap();
    assert_eq!(bfs_oracle_path(&g, 1, 0).unwrap().len(), 4);
    assert_eq!(bfs_oracle_path(&g, 0, 1).unwrap().len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracles_agree_on_relabelings(n in 2usize..7, delta in 2usize..=3, seed in any::<u64>(), rot in 1usize..6) {
        let g = random_strongly_connected(n, delta, seed).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm[1..].rotate_left(rot % (n - 1).max(1));
        let h = g.relabeled(&perm);
        prop_assert!(rooted_port_isomorphic(&g, &h));
        prop_assert!(brute_force_isomorphic(&g, &h));
    }

    #[test]
    fn oracles_agree_on_unrelated_graphs(a in any::<u64>(), b in any::<u64>()) {
        let g = random_strongly_connected(5, 3, a).unwrap();
        let h = random_strongly_connected(5, 3, b).unwrap();
        prop_assert_eq!(rooted_port_isomorphic(&g, &h), brute_force_isomorphic(&g, &h));
    }
}
