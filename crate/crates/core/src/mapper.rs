//! The root's master computer: rebuilds the network from the transcript.
//!
//! Every root call shows the root the canonical path from the caller in and
//! back out. That pair of paths names the caller. A stack of names follows
//! the DFS token: FORWARD pushes the node the token reached (drawing a wire
//! from the old top), BACK pops.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::constructs::{Class, Kind, SnakeClass};
use crate::engine::{Event, Transcript};
use crate::portgraph::{validate, Edge, Port, PortGraph};

/// Round-trip canonical path between a node and the root, as port pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathKey {
    pub to_root: Vec<(Port, Port)>,
    pub from_root: Vec<(Port, Port)>,
}

impl PathKey {
    pub fn is_root(&self) -> bool {
        self.to_root.is_empty() && self.from_root.is_empty()
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("event {index} ({event}): BACK with only the root on the stack")]
    PopRoot { index: usize, event: String },
    #[error("event {index} ({event}): forward report without a path key")]
    MissingKey { index: usize, event: String },
    #[error("event {index} ({event}): transcript continues after Terminated")]
    AfterComplete { index: usize, event: String },
    #[error("event {index} ({event}): unexpected event")]
    Unexpected { index: usize, event: String },
    #[error("map is incomplete: no Terminated event")]
    Incomplete,
    #[error("reconstructed graph is invalid: {0}")]
    Invalid(String),
}

/// The master computer's partial map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapState {
    pub name_table: BTreeMap<PathKey, usize>,
    pub stack: Vec<usize>,
    pub edges: BTreeSet<Edge>,
    pub complete: bool,
    pending: PathKey,
    seen: usize,
    forward_events: usize,
}

impl Default for MapState {
    fn default() -> Self {
        Self::new()
    }
}

impl MapState {
    pub fn new() -> Self {
        MapState {
            name_table: BTreeMap::from([(PathKey::default(), 0)]),
            stack: vec![0],
            edges: BTreeSet::new(),
            complete: false,
            pending: PathKey::default(),
            seen: 0,
            forward_events: 0,
        }
    }

    pub fn top(&self) -> usize {
        *self.stack.last().expect("stack holds the root")
    }

    pub fn forward_events(&self) -> usize {
        self.forward_events
    }

    /// Applies one transcript event in place.
    pub fn ingest(&mut self, e: &Event) -> Result<(), MapError> {
        let index = self.seen;
        self.seen += 1;
        let event = e.to_string();
        if self.complete {
            return Err(MapError::AfterComplete { index, event });
        }
        match *e {
            Event::Start if index == 0 => {}
            Event::Start => return Err(MapError::Unexpected { index, event }),
            Event::PathChar(c) => {
                if c.kind == Kind::Tail {
                    return Ok(());
                }
                let (Some(o), Some(i)) = (c.out_port, c.in_port) else {
                    return Err(MapError::Unexpected { index, event });
                };
                match c.snake_class() {
                    Some(SnakeClass::Ig) => self.pending.to_root.push((o, i)),
                    Some(SnakeClass::Id) => self.pending.from_root.push((o, i)),
                    _ => return Err(MapError::Unexpected { index, event }),
                }
            }
            Event::LoopToken(c) | Event::RootEdge(c) => {
                let key = std::mem::take(&mut self.pending);
                let via_root = matches!(e, Event::RootEdge(_));
                if via_root != key.is_root() {
                    return Err(MapError::Unexpected { index, event });
                }
                match c.class {
                    Class::Forward => {
                        let (Some(i), Some(j)) = (c.out_port, c.in_port) else {
                            return Err(MapError::Unexpected { index, event });
                        };
                        let next = self.name_table.len();
                        let cur = *self.name_table.entry(key).or_insert(next);
                        self.edges.insert(Edge::new(self.top(), i, cur, j));
                        self.stack.push(cur);
                        self.forward_events += 1;
                    }
                    Class::Back => {
                        if self.stack.len() < 2 {
                            return Err(MapError::PopRoot { index, event });
                        }
                        self.stack.pop();
                    }
                    _ => return Err(MapError::Unexpected { index, event }),
                }
            }
            Event::Terminated => {
                if !self.pending.is_root() || self.stack.len() != 1 {
                    return Err(MapError::Unexpected { index, event });
                }
                self.complete = true;
            }
        }
        Ok(())
    }
}

/// Value-level form of [`MapState::ingest`].
pub fn ingest_event(mut m: MapState, e: &Event) -> Result<MapState, MapError> {
    // a root call that never reports leaves a key dangling; catch it at the loop event
    if let Event::LoopToken(c) = e {
        if c.class == Class::Forward && m.pending.is_root() {
            return Err(MapError::MissingKey { index: m.seen, event: e.to_string() });
        }
    }
    m.ingest(e)?;
    Ok(m)
}

/// The reconstructed network, rooted at name 0.
pub fn finalize(m: &MapState) -> Result<PortGraph, MapError> {
    if !m.complete {
        return Err(MapError::Incomplete);
    }
    let max_port = m.edges.iter().map(|e| e.out_port.max(e.in_port) as usize).max().unwrap_or(0);
    let g = PortGraph { delta: max_port.max(2), root: 0, nodes: m.name_table.len(), edges: m.edges.iter().copied().collect() };
    let report = validate(&g);
    if !report.is_valid() {
        return Err(MapError::Invalid(report.to_string()));
    }
    Ok(g)
}

/// Feeds a whole transcript through a fresh map and finalizes it.
pub fn reconstruct(t: &Transcript) -> Result<PortGraph, MapError> {
    let mut m = MapState::new();
    for (_, e) in &t.events {
        m = ingest_event(m, e)?;
    }
    finalize(&m)
}
