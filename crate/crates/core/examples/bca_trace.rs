//! One isolated backwards call: the far end of a wire hands a DFS token to
//! the near end.
//!
//! cargo run --example bca_trace

use snakenet::constructs::Character;
use snakenet::portgraph::directed_cycle;
use snakenet::protocol::run_bca_isolated;

fn main() {
    let g = directed_cycle(4).unwrap();
    let e = g.edges[0];
    let t = run_bca_isolated(&g, e, Character::dfs(Some(e.out_port), Some(e.in_port))).unwrap();
    println!("wire {} -> {}: token goes back from {} to {}", e.src, e.dst, e.dst, e.src);
    for line in &t.log {
        println!("{line}");
    }
    let around: Vec<usize> = t.marked_loop.iter().map(|w| w.0).collect();
    println!("marked loop visits {around:?}");
    println!("delivered to {:?} in {} ticks, clean afterwards: {}", t.delivered_to, t.ticks, t.clean_after);
    println!("{}", t.to_json());
}
