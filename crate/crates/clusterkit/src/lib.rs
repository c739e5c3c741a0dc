//! Topology-agnostic cluster membership and asynchronous messaging.
//!
//! One API — join, leave, members, forward, cast — runs over runtime-selected
//! backends: a static roster, a gossiping full mesh with multi-channel and
//! multi-connection messaging, client-server, a hybrid-gossip peer-to-peer
//! overlay (HyParView membership plus Plumtree broadcast trees), and
//! publish-subscribe through an in-process broker. Everything executes over a
//! pluggable transport whose default is a seeded discrete-event network
//! simulator, so protocol behavior is reproducible down to the trace hash.
//!
//! The [`scenario`] module packages benchmark workloads (unicast, channel
//! separation, echo and quorum KV over a consistent-hash ring, and a gossiped
//! grow-only counter) that exercise the backends at desk scale.

pub mod mesh;
pub mod p2p;
pub mod peer;
pub mod policy;
pub mod pubsub;
pub mod scenario;
pub mod sim;
pub mod types;
pub mod wire;


pub use sim::{Sim, SimConfig, SimTime};

