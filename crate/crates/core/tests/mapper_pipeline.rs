use proptest::prelude::*;
use snakenet::engine::{Event, Transcript};
use snakenet::mapper::{finalize, ingest_event, reconstruct, MapError, MapState};
use snakenet::portgraph::{directed_cycle, random_strongly_connected, rooted_port_isomorphic, tree_loop_family, validate};
use snakenet::protocol::run_gtd;

#[test]
fn tree_loop_reconstructs() {
    let g = tree_loop_family(2, &[1, 3, 2, 4]).unwrap();
    let (t, _) = run_gtd(&g).unwrap();
    let h = reconstruct(&t).unwrap();
    assert!(rooted_port_isomorphic(&g, &h));
    assert_eq!(h.edges.len(), g.edges.len());
}

#[test]
fn map_serializes_as_a_valid_graph() {
    let g = random_strongly_connected(12, 3, 4).unwrap();
    let (t, _) = run_gtd(&g).unwrap();
    let h = reconstruct(&t).unwrap();
    let back = snakenet::portgraph::PortGraph::from_json(&h.to_json()).unwrap();
    assert!(validate(&back).is_valid());
    assert!(h.to_dot().contains("doublecircle"));
}

#[test]
fn stack_tracks_token_and_ends_at_root() {
    let g = directed_cycle(4).unwrap();
    let (t, _) = run_gtd(&g).unwrap();
    let mut m = MapState::new();
    let mut deepest = 0;
    for (_, e) in &t.events {
        m = ingest_event(m, e).unwrap();
        assert_eq!(m.stack[0], 0);
        deepest = deepest.max(m.stack.len());
        assert!(m.edges.iter().all(|e| e.src < m.name_table.len() && e.dst < m.name_table.len()));
    }
    assert!(m.complete);
    assert_eq!(m.stack, vec![0]);
    assert_eq!(deepest, 5);
    assert_eq!(m.forward_events(), 4);
}

#[test]
fn dropping_a_path_character_is_caught() {
    let g = random_strongly_connected(8, 3, 1).unwrap();
    let (t, _) = run_gtd(&g).unwrap();
    // a path character of the last forward report; BACK reports only pop, so their keys do not matter
    let fwd = t
        .events
        .iter()
        .rposition(|(_, e)| matches!(e, Event::LoopToken(c) if c.class == snakenet::constructs::Class::Forward))
        .unwrap();
    let i = t.events[..fwd].iter().rposition(|(_, e)| matches!(e, Event::PathChar(c) if c.out_port.is_some())).unwrap();
    let mut bad = t.clone();
    bad.events.remove(i);
    if let Ok(h) = reconstruct(&bad) {
        assert!(!rooted_port_isomorphic(&g, &h));
    }
}

#[test]
fn truncated_transcript_is_incomplete() {
    let (t, _) = run_gtd(&directed_cycle(3).unwrap()).unwrap();
    let mut m = MapState::new();
    for (_, e) in &t.events[..t.events.len() - 1] {
        m = ingest_event(m, e).unwrap();
    }
    assert_eq!(finalize(&m).unwrap_err(), MapError::Incomplete);
}

#[test]
fn transcript_json_round_trips() {
    let (t, _) = run_gtd(&directed_cycle(3).unwrap()).unwrap();
    let back = Transcript::from_json(&t.to_json()).unwrap();
    assert_eq!(back, t);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_graphs_are_mapped_exactly(n in 2usize..14, delta in 2usize..=4, seed in any::<u64>()) {
        let g = random_strongly_connected(n, delta, seed).unwrap();
        let (t, _) = run_gtd(&g).unwrap();
        let h = reconstruct(&t).unwrap();
        prop_assert!(rooted_port_isomorphic(&g, &h));
        prop_assert_eq!(h.nodes, g.nodes);
        prop_assert_eq!(h.edges.len(), g.edges.len());
    }

    #[test]
    fn relabeling_does_not_change_the_map(seed in any::<u64>()) {
        let g = random_strongly_connected(7, 3, seed).unwrap();
        let mut perm: Vec<usize> = (0..g.nodes).collect();
        perm.rotate_left(1);
        let h = g.relabeled(&perm);
        let (a, _) = run_gtd(&g).unwrap();
        let (b, _) = run_gtd(&h).unwrap();
        prop_assert_eq!(reconstruct(&a).unwrap(), reconstruct(&b).unwrap());
    }
}
