//! One isolated root call: what the root sees and what the call leaves behind.
//!
//! cargo run --example rca_trace

use snakenet::constructs::Character;
use snakenet::portgraph::{bfs_oracle_path, tree_loop_family};
use snakenet::protocol::run_rca_isolated;

fn main() {
    let g = tree_loop_family(2, &[1, 3, 2, 4]).unwrap();
    let a = 5;
    let t = run_rca_isolated(&g, a, Character::forward(2, 1)).expect("node 5 is not the root");
    for line in &t.log {
        println!("{line}");
    }
    println!("loop length {} finished at tick {}", t.loop_len(), t.ticks);
    println!("path to root   {:?} (oracle {:?})", t.in_path, bfs_oracle_path(&g, a, g.root).unwrap().hops);
    println!("path from root {:?}", t.out_path);
    println!("residue one tick after absorb: {}", t.residue_after_absorb);
    println!("network clean afterwards: {}", t.clean_after);
}
