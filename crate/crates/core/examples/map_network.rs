//! Maps a network from its root and checks the map against the network.
//!
//! cargo run --release --example map_network -- [n] [delta] [seed]

use snakenet::engine::Event;
use snakenet::mapper::reconstruct;
use snakenet::portgraph::{random_strongly_connected, rooted_port_isomorphic};
use snakenet::protocol::run_gtd;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let n = *args.first().unwrap_or(&12) as usize;
    let delta = *args.get(1).unwrap_or(&3) as usize;
    let seed = *args.get(2).unwrap_or(&1);

    let g = random_strongly_connected(n, delta, seed).expect("valid generator parameters");
    let (transcript, ticks) = run_gtd(&g).expect("run finishes within budget");

    let reports = transcript.count(|e| matches!(e, Event::LoopToken(_) | Event::RootEdge(_)));
    println!("N={} |E|={} D={} ticks={ticks} root reports={reports}", g.nodes, g.edges.len(), g.diameter());
    println!("first events:");
    for line in transcript.to_log().lines().take(12) {
        println!("  {line}");
    }

    let map = reconstruct(&transcript).expect("transcript is well formed");
    let iso = rooted_port_isomorphic(&g, &map);
    println!("map: {} nodes, {} wires, isomorphic to the network: {iso}", map.nodes, map.edges.len());
}
