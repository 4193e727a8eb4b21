//! Lockstep executor. Every tick each processor reads the frames written
//! on its in-wires during the previous tick, applies the transition
//! function, and writes its out-wires for the next tick.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructs::{Character, Frame, Lane};
use crate::portgraph::{validate, PortGraph, MAX_DELTA};
use crate::protocol::node::{step_node, DfsTask, NodeCtx, NodeEvent, NodeState, ProtocolFault};

/// Something the root pipes to its master computer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Start,
    PathChar(Character),
    LoopToken(Character),
    RootEdge(Character),
    Terminated,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Start => write!(f, "Start"),
            Event::PathChar(c) => write!(f, "PathChar:{c}"),
            Event::LoopToken(c) => write!(f, "Loop:{c}"),
            Event::RootEdge(c) => write!(f, "RootEdge:{c}"),
            Event::Terminated => write!(f, "Terminated"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse transcript event {0:?}")]
pub struct EventParseError(pub String);

impl FromStr for Event {
    type Err = EventParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || EventParseError(s.to_string());
        match s {
            "Start" => return Ok(Event::Start),
            "Terminated" => return Ok(Event::Terminated),
            _ => {}
        }
        let (tag, ch) = s.split_once(':').ok_or_else(err)?;
        let c: Character = ch.parse().map_err(|_| err())?;
        match tag {
            "PathChar" => Ok(Event::PathChar(c)),
            "Loop" => Ok(Event::LoopToken(c)),
            "RootEdge" => Ok(Event::RootEdge(c)),
            _ => Err(err()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct EventRecord {
    tick: u64,
    event: String,
}

/// Time-ordered log of root events.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub events: Vec<(u64, Event)>,
}

impl Transcript {
    /// One `tick=<t> event=<...>` line per event.
    pub fn to_log(&self) -> String {
        self.events.iter().map(|(t, e)| format!("tick={t} event={e}\n")).collect()
    }

    pub fn to_json(&self) -> String {
        let recs: Vec<EventRecord> =
            self.events.iter().map(|(t, e)| EventRecord { tick: *t, event: e.to_string() }).collect();
        serde_json::to_string_pretty(&recs).expect("transcript serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EngineError> {
        let recs: Vec<EventRecord> = serde_json::from_str(s).map_err(|e| EngineError::Format(e.to_string()))?;
        let events = recs
            .into_iter()
            .map(|r| r.event.parse().map(|e| (r.tick, e)).map_err(|e: EventParseError| EngineError::Format(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Transcript { events })
    }

    pub fn count(&self, pred: impl Fn(&Event) -> bool) -> usize {
        self.events.iter().filter(|(_, e)| pred(e)).count()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("protocol already started")]
    AlreadyStarted,
    #[error("tick budget of {0} exceeded")]
    TickBudgetExceeded(u64),
    #[error("simulation fault at node {node}, tick {tick}: {fault}")]
    Fault { node: usize, tick: u64, fault: ProtocolFault },
    #[error("format error: {0}")]
    Format(String),
}

/// Wire ids per port of each node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub in_edge: Vec<[Option<usize>; MAX_DELTA]>,
    pub out_edge: Vec<[Option<usize>; MAX_DELTA]>,
    pub ctx: Vec<NodeCtx>,
}

impl Topology {
    pub fn new(g: &PortGraph) -> Self {
        let mut in_edge = vec![[None; MAX_DELTA]; g.nodes];
        let mut out_edge = vec![[None; MAX_DELTA]; g.nodes];
        let mut ctx = vec![NodeCtx { delta: g.delta, in_ports: 0, out_ports: 0 }; g.nodes];
        for (k, e) in g.edges.iter().enumerate() {
            out_edge[e.src][e.out_port as usize - 1] = Some(k);
            in_edge[e.dst][e.in_port as usize - 1] = Some(k);
            ctx[e.src].out_ports |= 1 << e.out_port;
            ctx[e.dst].in_ports |= 1 << e.in_port;
        }
        Topology { in_edge, out_edge, ctx }
    }
}

/// Events one tick produced, per node, for instrumentation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepReport {
    pub tick: u64,
    pub events: Vec<(usize, NodeEvent)>,
}

/// The whole network at one instant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkState {
    pub graph: PortGraph,
    pub topo: Topology,
    pub nodes: Vec<NodeState>,
    /// Frame on each wire, written during the previous tick.
    pub frames: Vec<Frame>,
    pub tick: u64,
    pub transcript: Transcript,
    pub started: bool,
    pub terminated: bool,
    next: Vec<Frame>,
    /// Wires whose entry in `frames` is non-blank.
    dirty: Vec<usize>,
}

static BLANK: Frame = Frame::blank();

/// Fresh network with every processor quiescent and every wire blank.
pub fn init(g: &PortGraph) -> Result<NetworkState, EngineError> {
    let report = validate(g);
    if !report.is_valid() {
        return Err(EngineError::InvalidGraph(report.to_string()));
    }
    let nodes = (0..g.nodes).map(|v| NodeState::new(v == g.root)).collect();
    Ok(NetworkState {
        graph: g.clone(),
        topo: Topology::new(g),
        nodes,
        frames: vec![Frame::default(); g.edges.len()],
        tick: 0,
        transcript: Transcript::default(),
        started: false,
        terminated: false,
        next: vec![Frame::default(); g.edges.len()],
        dirty: Vec::new(),
    })
}

/// The outside signal that wakes the root.
pub fn inject_start(s: &mut NetworkState) -> Result<(), EngineError> {
    if s.started || s.tick != 0 || !snapshot_is_quiescent(s) {
        return Err(EngineError::AlreadyStarted);
    }
    s.started = true;
    let root = &mut s.nodes[s.graph.root];
    root.quiescent = false;
    root.dfs.visited = true;
    root.dfs.has_token = true;
    root.dfs.task = DfsTask::Advance;
    root.dfs.wait = 0;
    s.transcript.events.push((0, Event::Start));
    Ok(())
}

/// Pure single tick.
pub fn step(s: &NetworkState) -> Result<NetworkState, EngineError> {
    let mut next = s.clone();
    next.advance()?;
    Ok(next)
}

/// Steps until the root terminates. `max_ticks` bounds the absolute tick.
pub fn run_until_terminal(mut s: NetworkState, max_ticks: u64) -> Result<(NetworkState, Transcript), EngineError> {
    while !s.terminated {
        if s.tick >= max_ticks {
            return Err(EngineError::TickBudgetExceeded(max_ticks));
        }
        s.advance()?;
    }
    let t = s.transcript.clone();
    Ok((s, t))
}

/// True iff no processor holds snake, token or loop state and no wire
/// carries anything but (possibly) the DFS token. DFS bookkeeping is
/// history and is not inspected.
pub fn snapshot_is_quiescent(s: &NetworkState) -> bool {
    s.nodes.iter().all(NodeState::protocol_clean)
        && s.frames.iter().all(|f| f.characters().all(|c| c.class == crate::constructs::Class::Dfs))
}

impl NetworkState {
    /// Advances one tick in place; returns what happened.
    pub fn advance(&mut self) -> Result<StepReport, EngineError> {
        let tick = self.tick + 1;
        let mut written = Vec::new();
        let mut report = StepReport { tick, events: Vec::new() };
        let mut ev = Vec::new();
        for v in 0..self.nodes.len() {
            let ins = &self.topo.in_edge[v];
            let busy = self.nodes[v].has_pending_work()
                || ins.iter().flatten().any(|&e| !self.frames[e].is_blank());
            if !busy {
                continue;
            }
            let ctx = self.topo.ctx[v];
            let mut inputs: [&Frame; MAX_DELTA] = [&BLANK; MAX_DELTA];
            for (k, e) in ins.iter().enumerate() {
                if let Some(e) = e {
                    inputs[k] = &self.frames[*e];
                }
            }
            let mut out = [Frame::default(); MAX_DELTA];
            ev.clear();
            step_node(&mut self.nodes[v], &ctx, &inputs[..ctx.delta], &mut out[..ctx.delta], &mut ev)
                .map_err(|fault| EngineError::Fault { node: v, tick, fault })?;
            for (k, e) in self.topo.out_edge[v].iter().enumerate() {
                if let Some(e) = *e {
                    if !out[k].is_blank() {
                        self.next[e] = out[k];
                        written.push(e);
                    }
                }
            }
            for &x in &ev {
                if v == self.graph.root {
                    let rec = match x {
                        NodeEvent::PathChar(c) => Some(Event::PathChar(c)),
                        NodeEvent::LoopToken(c) => Some(Event::LoopToken(c)),
                        NodeEvent::RootEdge(c) => Some(Event::RootEdge(c)),
                        NodeEvent::Terminated => {
                            self.terminated = true;
                            Some(Event::Terminated)
                        }
                        _ => None,
                    };
                    if let Some(r) = rec {
                        self.transcript.events.push((tick, r));
                    }
                }
                report.events.push((v, x));
            }
        }
        std::mem::swap(&mut self.frames, &mut self.next);
        // `next` holds last tick's frames now; blank it for the next write
        for &e in &self.dirty {
            self.next[e].clear();
        }
        self.dirty = written;
        self.tick = tick;
        Ok(report)
    }

    /// Characters currently stored at nodes or travelling on wires.
    pub fn characters_in_flight(&self) -> impl Iterator<Item = Character> + '_ {
        let held = self
            .nodes
            .iter()
            .flat_map(|n| n.ns.iter().flat_map(|s| s.lanes.iter().flat_map(|l| l.iter().map(|h| h.ch))));
        held.chain(self.frames.iter().flat_map(|f| f.characters()))
    }

    /// Frames on all wires for one lane, for inspection.
    pub fn lane_occupancy(&self, lane: Lane) -> usize {
        self.frames.iter().filter(|f| f.get(lane).is_some()).count()
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portgraph::Edge;

    fn two_cycle() -> PortGraph {
        PortGraph { delta: 2, root: 0, nodes: 2, edges: vec![Edge::new(0, 1, 1, 1), Edge::new(1, 1, 0, 1)] }
    }

    #[test]
    fn init_is_quiescent_and_pure() {
        let s = init(&two_cycle()).unwrap();
        assert!(s.nodes.iter().all(|n| n.quiescent));
        assert_eq!(s.frames.len(), 2);
        assert!(s.frames.iter().all(Frame::is_blank));
        assert!(snapshot_is_quiescent(&s));
        assert_eq!(s, init(&two_cycle()).unwrap());
    }

    #[test]
    fn init_rejects_invalid() {
        let mut g = two_cycle();
        g.edges.pop();
        assert!(matches!(init(&g), Err(EngineError::InvalidGraph(_))));
    }

    #[test]
    fn quiescence_is_a_fixed_point() {
        let s = init(&two_cycle()).unwrap();
        let t = step(&s).unwrap();
        assert_eq!(t.tick, 1);
        assert!(snapshot_is_quiescent(&t));
        assert_eq!(t.nodes, s.nodes);
    }

    #[test]
    fn start_wakes_root_only() {
        let mut s = init(&two_cycle()).unwrap();
        inject_start(&mut s).unwrap();
        assert!(!s.nodes[0].quiescent);
        assert!(s.nodes[1].quiescent);
        assert!(s.nodes[0].dfs.visited);
        assert_eq!(s.transcript.events, vec![(0, Event::Start)]);
        assert_eq!(inject_start(&mut s), Err(EngineError::AlreadyStarted));
    }

    #[test]
    fn first_step_sends_dfs_token_lowest_port() {
        let g = PortGraph {
            delta: 3,
            root: 0,
            nodes: 3,
            edges: vec![Edge::new(0, 3, 1, 1), Edge::new(0, 2, 2, 1), Edge::new(1, 1, 0, 1), Edge::new(2, 1, 0, 2)],
        };
        let mut s = init(&g).unwrap();
        inject_start(&mut s).unwrap();
        let a = step(&s).unwrap();
        let b = step(&s).unwrap();
        assert_eq!(a, b);
        // edge 1 leaves the root through out-port 2
        assert_eq!(a.frames[1].get(Lane::Dfs).unwrap().to_string(), "DFS(2,*)");
        assert!(a.frames[0].is_blank());
    }

    #[test]
    fn tiny_budget_is_exceeded() {
        let mut s = init(&two_cycle()).unwrap();
        inject_start(&mut s).unwrap();
        assert_eq!(run_until_terminal(s, 1).unwrap_err(), EngineError::TickBudgetExceeded(1));
    }

    #[test]
    fn event_lines_round_trip() {
        for line in ["Start", "PathChar:IGH(2,3)", "Loop:FWD(4,1)", "Loop:BACK", "RootEdge:FWD(1,1)", "RootEdge:BACK", "Terminated"] {
            assert_eq!(line.parse::<Event>().unwrap().to_string(), line);
        }
        assert!("Loop:".parse::<Event>().is_err());
    }
}
