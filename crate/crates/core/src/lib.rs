//! Tick-accurate simulation of anonymous finite-state processors on a
//! strongly connected directed network, mapping the network from its root.

pub mod cli;
pub mod constructs;
pub mod engine;
pub mod mapper;
pub mod portgraph;
pub mod protocol;

pub use constructs::Character;
pub use engine::{Event, NetworkState, Transcript};
pub use portgraph::{Edge, PortGraph};
