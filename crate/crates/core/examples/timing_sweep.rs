//! Root-call time against loop length, and whole-run time against N*D.
//!
//! cargo run --release --example timing_sweep

use snakenet::constructs::Character;
use snakenet::portgraph::{directed_cycle, random_strongly_connected, tree_loop_family, PortGraph};
use snakenet::protocol::{run_gtd_checked, run_rca_isolated, tick_budget, DEFAULT_BUDGET_MULT};

fn per_nd(g: &PortGraph) -> (u64, f64) {
    let r = run_gtd_checked(g, tick_budget(g, DEFAULT_BUDGET_MULT), false).unwrap();
    (r.ticks, r.ticks as f64 / (g.nodes * g.diameter()) as f64)
}

fn main() {
    println!("root calls on random(24, 3, 3):");
    println!("  A   L  ticks  ticks/L");
    let g = random_strongly_connected(24, 3, 3).unwrap();
    for a in (1..g.nodes).step_by(3) {
        let t = run_rca_isolated(&g, a, Character::back()).unwrap();
        println!("{a:3} {:3} {:6} {:8.2}", t.loop_len(), t.ticks, t.ticks as f64 / t.loop_len() as f64);
    }

    println!("\nfull runs:");
    println!("  family      N   D   ticks  ticks/(N*D)");
    for n in [8, 16, 32, 64] {
        let (t, r) = per_nd(&directed_cycle(n).unwrap());
        println!("  cycle    {n:4} {:3} {t:7} {r:8.1}", n - 1);
    }
    for depth in 1..=4usize {
        let g = tree_loop_family(depth, &(1..=1 << depth).collect::<Vec<_>>()).unwrap();
        let (t, r) = per_nd(&g);
        println!("  treeloop {:4} {:3} {t:7} {r:8.1}", g.nodes, g.diameter());
    }
}
