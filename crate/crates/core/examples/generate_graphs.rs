//! Builds one graph from each family, checks it, and prints it as JSON and DOT.
//!
//! cargo run --example generate_graphs

use snakenet::portgraph::{directed_cycle, random_strongly_connected, tree_loop_family, validate, PortGraph};

fn describe(name: &str, g: &PortGraph) {
    let report = validate(g);
    println!(
        "{name}: N={} delta={} |E|={} D={} valid={}",
        g.nodes,
        g.delta,
        g.edges.len(),
        g.diameter(),
        report.is_valid()
    );
}

fn main() {
    let random = random_strongly_connected(16, 3, 7).expect("generator parameters are valid");
    let cycle = directed_cycle(5).unwrap();
    let tree = tree_loop_family(2, &[1, 3, 2, 4]).unwrap();
    describe("random(16, 3, seed 7)", &random);
    describe("cycle(5)", &cycle);
    describe("treeloop(2, 1,3,2,4)", &tree);

    println!("\n{}", cycle.to_json());
    println!("\n{}", tree.to_dot());

    // the generator is deterministic in its seed
    assert_eq!(random, random_strongly_connected(16, 3, 7).unwrap());
    assert_ne!(random, random_strongly_connected(16, 3, 8).unwrap());
}
