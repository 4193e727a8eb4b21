//! Saves a transcript, tampers with one port number, and rebuilds the map
//! from each version.
//!
//! cargo run --example replay_transcript

use snakenet::engine::{Event, Transcript};
use snakenet::mapper::reconstruct;
use snakenet::portgraph::{random_strongly_connected, rooted_port_isomorphic};
use snakenet::protocol::run_gtd;

fn main() {
    let g = random_strongly_connected(6, 3, 2).unwrap();
    let (t, _) = run_gtd(&g).unwrap();
    let saved = t.to_json();

    let mut forged = Transcript::from_json(&saved).unwrap();
    let hit = forged.events.iter_mut().find_map(|(tick, e)| match e {
        Event::LoopToken(c) if c.in_port.is_some() => Some((tick, c)),
        _ => None,
    });
    if let Some((tick, c)) = hit {
        let p = c.in_port.as_mut().unwrap();
        *p = if *p == 1 { 2 } else { 1 };
        println!("tick {tick}: report rewritten to {c}");
    }

    for (name, tr) in [("original", Transcript::from_json(&saved).unwrap()), ("forged", forged)] {
        match reconstruct(&tr) {
            Ok(h) => println!("{name}: isomorphic = {}", rooted_port_isomorphic(&g, &h)),
            Err(e) => println!("{name}: rejected: {e}"),
        }
    }
}
