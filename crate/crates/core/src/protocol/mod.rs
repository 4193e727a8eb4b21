//! Topology determination: the per-node automaton ([`node`]) and the
//! drivers that run it as a whole protocol or as isolated sub-calls.
//!
//! A root-communication call (RCA) lets a processor `A` report a FORWARD or
//! BACK token to the root while the root sees both canonical paths between
//! them. A backwards call (BCA) moves the DFS token against the direction
//! of a wire. Both mark a loop with dying snakes, send the payload round it,
//! sweep up with KILL and UNMARK, and leave the network as they found it.

pub mod node;

use serde::Serialize;
use thiserror::Error;

use crate::constructs::{Character, Class, Kind, Namespace};
use crate::engine::{init, inject_start, EngineError, Event, NetworkState, Transcript};
use crate::portgraph::{Edge, Port, PortGraph};
pub use node::{node_transition, DfsState, NodeCtx, NodeEvent, NodeState, RcaPhase};
use node::{AfterRca, DfsTask};

/// Default multiplier `k` in the tick budget `k * delta * N * (D + 1)`.
pub const DEFAULT_BUDGET_MULT: u64 = 64;

/// Environment variable overriding [`DEFAULT_BUDGET_MULT`].
pub const BUDGET_MULT_VAR: &str = "SNAKENET_TICK_BUDGET_MULT";

/// The budget multiplier from the environment, or the default. Anything
/// that is not a positive integer is an error.
pub fn budget_mult_from_env() -> Result<u64, String> {
    match std::env::var(BUDGET_MULT_VAR) {
        Err(_) => Ok(DEFAULT_BUDGET_MULT),
        Ok(v) => match v.trim().parse::<u64>() {
            Ok(k) if k >= 1 => Ok(k),
            _ => Err(format!("{BUDGET_MULT_VAR} must be a positive integer, got {v:?}")),
        },
    }
}

/// Tick budget for a full run on `g`. Every wire costs a constant number
/// of calls, each linear in a loop of at most `2D` wires.
pub fn tick_budget(g: &PortGraph, mult: u64) -> u64 {
    mult * g.delta as u64 * g.nodes as u64 * (g.diameter() as u64 + 1)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CallError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("the root reports directly and never runs a root call")]
    RootInitiator,
    #[error("node {0} is not in the graph")]
    NoSuchNode(usize),
    #[error("edge {0:?} is not in the graph")]
    NoSuchEdge(Edge),
    #[error("payload {0} cannot be sent by this call")]
    BadPayload(Character),
}

/// Count of leftover growing-snake state and KILL tokens in one namespace:
/// marks, held characters and characters on wires.
pub fn growing_residue(s: &NetworkState, ns: Namespace) -> usize {
    let marks: usize = s.nodes.iter().map(|n| n.ns[ns.index()].growing.iter().filter(|g| g.visited).count()).sum();
    let residue = |c: &Character| match c.class {
        Class::Snake(cns, cls) => cns == ns && cls.is_growing(),
        Class::Kill(kns) => kns == ns,
        _ => false,
    };
    marks + s.characters_in_flight().filter(residue).count()
}

/// Every node back in its initial call state and nothing but DFS tokens
/// and spent KILL tokens on the wires. KILL reaching a clean node is
/// dropped, so those die out on the next tick.
pub fn call_state_clean(s: &NetworkState) -> bool {
    s.nodes.iter().all(NodeState::protocol_clean)
        && s.characters_in_flight().all(|c| matches!(c.class, Class::Dfs | Class::Kill(_)))
}

/// Nodes currently running a call of the given namespace as its caller.
pub fn active_callers(s: &NetworkState, ns: Namespace) -> usize {
    s.nodes.iter().filter(|n| n.ns[ns.index()].phase != RcaPhase::Idle).count()
}

/// Follows the marked loop of `ns` from `caller` using the current marks.
/// Returns the wires in loop order, or `None` if the marks do not close.
pub fn marked_loop(s: &NetworkState, ns: Namespace, caller: usize) -> Option<Vec<Edge>> {
    let g = &s.graph;
    let mut alt: Vec<bool> = s.nodes.iter().map(|n| n.ns[ns.index()].marks.alt).collect();
    let mut out = s.nodes[caller].ns[ns.index()].marks.succ[0]?;
    let mut v = caller;
    let mut edges = Vec::new();
    for _ in 0..=2 * g.nodes + 2 {
        let e = *g.out_edge(v, out)?;
        edges.push(e);
        v = e.dst;
        if v == caller {
            return (s.nodes[v].ns[ns.index()].marks.pred[0] == Some(e.in_port)).then_some(edges);
        }
        let m = &s.nodes[v].ns[ns.index()].marks;
        if ns == Namespace::Rca && v == g.root {
            (m.pred[0] == Some(e.in_port)).then_some(())?;
            out = m.succ[1]?;
            continue;
        }
        let both = m.pred[0].is_some() && m.pred[1].is_some();
        let k = if both { alt[v] as usize } else { m.appropriate()? };
        (m.pred[k] == Some(e.in_port)).then_some(())?;
        out = m.succ[k]?;
        if both {
            alt[v] = !alt[v];
        }
    }
    None
}

/// What one isolated root call did.
#[derive(Clone, Debug, Serialize)]
pub struct RcaTrace {
    pub initiator: usize,
    pub payload: String,
    /// Tick at which the caller finished.
    pub ticks: u64,
    /// Hops of the path caller -> root read off the IG snake at the root.
    pub in_path: Vec<(Port, Port)>,
    /// Hops of the path root -> caller read off the ID snake at the root.
    pub out_path: Vec<(Port, Port)>,
    /// Loop token observed passing the root.
    pub root_token: Option<String>,
    /// Marked loop as wires, captured when the payload was released.
    pub marked_loop: Vec<(usize, Port, usize, Port)>,
    /// IG parent in-port of every node, captured at payload release.
    pub ig_parents: Vec<Option<Port>>,
    pub released_tick: u64,
    pub absorbed_tick: u64,
    /// Growing residue one tick after the caller absorbed the payload.
    pub residue_after_absorb: usize,
    /// Network free of call state after the caller finished.
    pub clean_after: bool,
    pub max_concurrent_callers: usize,
    /// `tick=<t> event=<...>` lines of root events and call milestones.
    pub log: Vec<String>,
}

impl RcaTrace {
    pub fn loop_len(&self) -> usize {
        self.marked_loop.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// What one isolated backwards call did.
#[derive(Clone, Debug, Serialize)]
pub struct BcaTrace {
    pub edge: (usize, Port, usize, Port),
    pub payload: String,
    pub ticks: u64,
    pub delivered_to: Option<usize>,
    pub delivered_tick: Option<u64>,
    pub marked_loop: Vec<(usize, Port, usize, Port)>,
    pub residue_after_absorb: usize,
    /// Network free of call state (DFS bookkeeping aside) when the caller finished.
    pub clean_after: bool,
    pub log: Vec<String>,
}

impl BcaTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

fn tuple(e: &Edge) -> (usize, Port, usize, Port) {
    (e.src, e.out_port, e.dst, e.in_port)
}

fn call_budget(g: &PortGraph) -> u64 {
    64 * (g.diameter() as u64 + 2) + 256
}

/// Runs one root call from `a` on an otherwise quiescent network.
pub fn run_rca_isolated(g: &PortGraph, a: usize, payload: Character) -> Result<RcaTrace, CallError> {
    if a >= g.nodes {
        return Err(CallError::NoSuchNode(a));
    }
    if a == g.root {
        return Err(CallError::RootInitiator);
    }
    if !matches!(payload.class, Class::Forward | Class::Back) {
        return Err(CallError::BadPayload(payload));
    }
    let mut s = init(g)?;
    s.nodes[a].dfs.task = DfsTask::Rca { payload, then: AfterRca::Nothing };
    let budget = call_budget(g);
    let ns = Namespace::Rca;
    let mut tr = RcaTrace {
        initiator: a,
        payload: payload.to_string(),
        ticks: 0,
        in_path: Vec::new(),
        out_path: Vec::new(),
        root_token: None,
        marked_loop: Vec::new(),
        ig_parents: Vec::new(),
        released_tick: 0,
        absorbed_tick: 0,
        residue_after_absorb: usize::MAX,
        clean_after: false,
        max_concurrent_callers: 0,
        log: Vec::new(),
    };
    loop {
        if s.tick >= budget {
            return Err(EngineError::TickBudgetExceeded(budget).into());
        }
        let rep = s.advance()?;
        tr.max_concurrent_callers = tr.max_concurrent_callers.max(active_callers(&s, ns));
        if tr.absorbed_tick != 0 && rep.tick == tr.absorbed_tick + 1 {
            tr.residue_after_absorb = growing_residue(&s, ns);
        }
        let mut done = false;
        for (v, e) in rep.events {
            match e {
                NodeEvent::PathChar(c) => {
                    if let Some(p) = c.ports() {
                        match c.snake_class() {
                            Some(crate::constructs::SnakeClass::Ig) => tr.in_path.push(p),
                            _ => tr.out_path.push(p),
                        }
                    }
                    tr.log.push(format!("tick={} event={}", rep.tick, Event::PathChar(c)));
                }
                NodeEvent::LoopToken(c) => {
                    tr.root_token = Some(c.to_string());
                    tr.log.push(format!("tick={} event={}", rep.tick, Event::LoopToken(c)));
                }
                NodeEvent::LoopReleased(_) if v == a => {
                    tr.released_tick = rep.tick;
                    tr.marked_loop = marked_loop(&s, ns, a).unwrap_or_default().iter().map(tuple).collect();
                    tr.ig_parents = s.nodes.iter().map(|n| n.ns[0].growing[0].parent).collect();
                    tr.log.push(format!("tick={} event=Released:{payload}", rep.tick));
                }
                NodeEvent::LoopAbsorbed(_) if v == a => {
                    tr.absorbed_tick = rep.tick;
                    tr.log.push(format!("tick={} event=Absorbed:{payload}", rep.tick));
                }
                NodeEvent::CallDone(_) if v == a => done = true,
                _ => {}
            }
        }
        if done {
            tr.ticks = s.tick;
            tr.clean_after = call_state_clean(&s);
            tr.log.push(format!("tick={} event=Done", s.tick));
            return Ok(tr);
        }
    }
}

/// Runs one backwards call: the far end `B` of `edge` hands `payload` to
/// the near end `A`, against the wire's direction.
pub fn run_bca_isolated(g: &PortGraph, edge: Edge, payload: Character) -> Result<BcaTrace, CallError> {
    if !g.edges.contains(&edge) {
        return Err(CallError::NoSuchEdge(edge));
    }
    if payload.class != Class::Dfs || payload.kind != Kind::Token {
        return Err(CallError::BadPayload(payload));
    }
    let mut s = init(g)?;
    let b = edge.dst;
    s.nodes[b].dfs.task = DfsTask::Bca { in_port: edge.in_port, payload };
    let budget = call_budget(g);
    let ns = Namespace::Bca;
    let mut tr = BcaTrace {
        edge: tuple(&edge),
        payload: payload.to_string(),
        ticks: 0,
        delivered_to: None,
        delivered_tick: None,
        marked_loop: Vec::new(),
        residue_after_absorb: usize::MAX,
        clean_after: false,
        log: Vec::new(),
    };
    let mut absorbed = 0;
    loop {
        if s.tick >= budget {
            return Err(EngineError::TickBudgetExceeded(budget).into());
        }
        let rep = s.advance()?;
        if absorbed != 0 && rep.tick == absorbed + 1 {
            tr.residue_after_absorb = growing_residue(&s, ns);
        }
        let mut done = false;
        for (v, e) in rep.events {
            match e {
                NodeEvent::PayloadDelivered => {
                    tr.delivered_to = Some(v);
                    tr.delivered_tick = Some(rep.tick);
                    tr.log.push(format!("tick={} event=Delivered:{payload}@{v}", rep.tick));
                }
                NodeEvent::LoopReleased(_) if v == b => {
                    tr.marked_loop = marked_loop(&s, ns, b).unwrap_or_default().iter().map(tuple).collect();
                    tr.log.push(format!("tick={} event=Released:{payload}", rep.tick));
                }
                NodeEvent::LoopAbsorbed(_) if v == b => {
                    absorbed = rep.tick;
                    tr.log.push(format!("tick={} event=Absorbed:{payload}", rep.tick));
                }
                NodeEvent::CallDone(_) if v == b => done = true,
                _ => {}
            }
        }
        if done {
            tr.ticks = s.tick;
            tr.clean_after = call_state_clean(&s);
            tr.log.push(format!("tick={} event=Done", s.tick));
            return Ok(tr);
        }
    }
}

/// Full topology determination on `g` with the default tick budget
/// (multiplier overridable through the environment).
pub fn run_gtd(g: &PortGraph) -> Result<(Transcript, u64), EngineError> {
    let mult = budget_mult_from_env().map_err(EngineError::Format)?;
    let r = run_gtd_checked(g, tick_budget(g, mult), false)?;
    Ok((r.transcript, r.ticks))
}

/// Result of an instrumented full run.
#[derive(Clone, Debug)]
pub struct GtdReport {
    pub transcript: Transcript,
    pub ticks: u64,
    pub rca_calls: usize,
    pub bca_calls: usize,
    /// `(tick, node, namespace)` of every call that left state behind.
    pub unclean_calls: Vec<(u64, usize, Namespace)>,
    pub max_concurrent_rca: usize,
    pub final_state: NetworkState,
}

/// Runs the whole protocol; with `check_calls`, inspects the network after
/// every call finishes for leftover snake, token or loop state.
pub fn run_gtd_checked(g: &PortGraph, budget: u64, check_calls: bool) -> Result<GtdReport, EngineError> {
    let mut s = init(g)?;
    inject_start(&mut s)?;
    let mut rep = GtdReport {
        transcript: Transcript::default(),
        ticks: 0,
        rca_calls: 0,
        bca_calls: 0,
        unclean_calls: Vec::new(),
        max_concurrent_rca: 0,
        final_state: s.clone(),
    };
    while !s.terminated {
        if s.tick >= budget {
            return Err(EngineError::TickBudgetExceeded(budget));
        }
        let step = s.advance()?;
        for &(v, e) in &step.events {
            if let NodeEvent::CallDone(ns) = e {
                match ns {
                    Namespace::Rca => rep.rca_calls += 1,
                    Namespace::Bca => rep.bca_calls += 1,
                }
                if check_calls && !call_state_clean(&s) {
                    rep.unclean_calls.push((step.tick, v, ns));
                }
            }
        }
        if check_calls {
            rep.max_concurrent_rca = rep.max_concurrent_rca.max(active_callers(&s, Namespace::Rca));
        }
    }
    rep.ticks = s.tick;
    rep.transcript = s.transcript.clone();
    rep.final_state = s;
    Ok(rep)
}

/// The DFS bookkeeping of every node, for inspection after a run.
pub fn dfs_states(s: &NetworkState) -> Vec<DfsState> {
    s.nodes.iter().map(|n| n.dfs).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portgraph::{bfs_oracle_path, directed_cycle};

    fn two_cycle() -> PortGraph {
        directed_cycle(2).unwrap()
    }

    #[test]
    fn root_cannot_initiate() {
        assert_eq!(run_rca_isolated(&two_cycle(), 0, Character::back()).unwrap_err(), CallError::RootInitiator);
    }

    #[test]
    fn rca_on_two_cycle() {
        let t = run_rca_isolated(&two_cycle(), 1, Character::forward(1, 1)).unwrap();
        assert_eq!(t.loop_len(), 2);
        assert_eq!(t.in_path, vec![(1, 1)]);
        assert_eq!(t.out_path, vec![(1, 1)]);
        assert_eq!(t.root_token.as_deref(), Some("FWD(1,1)"));
        let chars: Vec<&str> = t.log.iter().filter_map(|l| l.split("event=PathChar:").nth(1)).collect();
        assert_eq!(chars, ["IGH(1,1)", "IGT", "IDH(1,1)", "IDT"]);
        assert_eq!(t.residue_after_absorb, 0);
        assert!(t.clean_after);
    }

    #[test]
    fn bca_on_two_cycle() {
        let g = two_cycle();
        let e = g.edges[0];
        let t = run_bca_isolated(&g, e, Character::dfs(Some(1), Some(1))).unwrap();
        assert_eq!(t.delivered_to, Some(0));
        assert!(t.clean_after);
        assert_eq!(t.marked_loop.len(), 2);
    }

    #[test]
    fn bca_on_three_cycle_follows_oracle() {
        let g = directed_cycle(3).unwrap();
        let e = g.edges[0];
        let t = run_bca_isolated(&g, e, Character::dfs(Some(1), Some(1))).unwrap();
        assert_eq!(t.delivered_to, Some(0));
        let back = bfs_oracle_path(&g, 1, 0).unwrap();
        let hops: Vec<(Port, Port)> = t.marked_loop.iter().map(|e| (e.1, e.3)).collect();
        assert_eq!(hops[..back.len()], back.hops[..]);
        assert!(t.clean_after);
    }

    #[test]
    fn gtd_on_two_cycle() {
        let (t, ticks) = run_gtd(&two_cycle()).unwrap();
        let lines: Vec<String> = t
            .events
            .iter()
            .filter(|(_, e)| !matches!(e, Event::PathChar(_)))
            .map(|(_, e)| e.to_string())
            .collect();
        assert_eq!(lines, ["Start", "Loop:FWD(1,1)", "RootEdge:FWD(1,1)", "Loop:BACK", "RootEdge:BACK", "Terminated"]);
        assert!(ticks > 0);
    }

    #[test]
    fn loop_walk_needs_marks() {
        let s = init(&two_cycle()).unwrap();
        assert!(marked_loop(&s, Namespace::Rca, 1).is_none());
    }
}
