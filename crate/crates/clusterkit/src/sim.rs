//! Deterministic discrete-event network simulator.
//!
//! One event loop owns all state: virtual clock, per-link latency, drop and
//! partition behavior, finite accept queues and an optional per-connection
//! bandwidth model. Node logic runs as callbacks inside event processing, so
//! a fixed `(SimConfig, workload)` pair always produces the identical event
//! order and the identical [`Trace`] hash.
//!
//! The [`Transport`] trait is the contract node logic programs against; a
//! real-socket transport can satisfy the same observable semantics later.

use std::any::Any;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::io::Write;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::types::{stable_hash, ChannelName, NodeName};
use crate::wire::{TAG_CONTROL, TAG_ENVELOPE, TAG_GOSSIP};

/// Virtual time in nanoseconds since simulation start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn nanos(self) -> u64 {
        self.0
    }

    pub fn as_duration(self) -> Duration {
        Duration::from_nanos(self.0)
    }

    pub fn saturating_sub(self, other: SimTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add<Duration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: Duration) -> SimTime {
        SimTime(self.0 + rhs.as_nanos() as u64)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulator parameters. Identical config plus identical workload implies an
/// identical trace.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    /// Round-trip latency between any two nodes unless overridden per link.
    pub default_rtt: Duration,
    pub per_link_rtt: BTreeMap<(NodeName, NodeName), Duration>,
    /// Probability that a sent frame never arrives.
    pub drop_rate: f64,
    /// Maximum connects waiting in a node's accept queue; arrivals beyond it
    /// are refused.
    pub accept_queue_capacity: usize,
    /// Accepts serviced per simulated millisecond.
    pub accept_service_per_ms: u32,
    /// Bytes per second one connection direction can carry; frames occupy the
    /// connection for `len / bandwidth` before transmission. Off by default.
    pub bandwidth_bytes_per_sec: Option<u64>,
    /// Uniform ±10% one-way latency jitter under the seeded generator.
    pub latency_jitter: bool,
    /// Retain individual trace events (the rolling hash is always kept).
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            default_rtt: Duration::from_millis(1),
            per_link_rtt: BTreeMap::new(),
            drop_rate: 0.0,
            accept_queue_capacity: 128,
            accept_service_per_ms: 64,
            bandwidth_bytes_per_sec: None,
            latency_jitter: false,
            record_trace: true,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig {
            seed,
            ..SimConfig::default()
        }
    }
}

/// Handle for one connection generation between two endpoints.
///
/// The 4-tuple (src, dst, channel, slot) names the logical link; the
/// generation increments on every reconnect of that tuple, so stale handles
/// are detectable.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnectionId {
    pub src: NodeName,
    pub dst: NodeName,
    pub channel: ChannelName,
    pub slot: u32,
    pub generation: u64,
}

impl ConnectionId {
    pub fn key(&self) -> ConnKey {
        ConnKey {
            src: self.src.clone(),
            dst: self.dst.clone(),
            channel: self.channel.clone(),
            slot: self.slot,
        }
    }

    /// The endpoint that is not `node`.
    pub fn peer_of(&self, node: &NodeName) -> &NodeName {
        if *node == self.src {
            &self.dst
        } else {
            &self.src
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConnKey {
    pub src: NodeName,
    pub dst: NodeName,
    pub channel: ChannelName,
    pub slot: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnectError {
    /// The destination's accept queue was full.
    Refused,
    /// The destination is partitioned away or not running.
    Unreachable,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SendError {
    #[error("connection is not open")]
    ClosedConnection,
}

/// Trace event kinds, in the vocabulary the export format uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimEventKind {
    Connect,
    Accept,
    Refuse,
    FrameSent,
    FrameDelivered,
    FrameDropped,
    Disconnect,
    Partition,
    Heal,
}

impl SimEventKind {
    pub fn label(self) -> &'static str {
        match self {
            SimEventKind::Connect => "connect",
            SimEventKind::Accept => "accept",
            SimEventKind::Refuse => "refuse",
            SimEventKind::FrameSent => "frame_sent",
            SimEventKind::FrameDelivered => "frame_delivered",
            SimEventKind::FrameDropped => "frame_dropped",
            SimEventKind::Disconnect => "disconnect",
            SimEventKind::Partition => "partition",
            SimEventKind::Heal => "heal",
        }
    }
}

/// One timestamped simulator event.
#[derive(Clone, Debug)]
pub struct SimEvent {
    pub time: SimTime,
    pub kind: SimEventKind,
    pub src: String,
    pub dst: String,
    pub channel: String,
    pub slot: u32,
    pub size: usize,
    pub detail: String,
}

impl SimEvent {
    fn line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.time,
            self.kind.label(),
            self.src,
            self.dst,
            self.channel,
            self.slot,
            self.size,
            self.detail
        )
    }
}

/// Deterministic, hashable execution record.
#[derive(Debug, Default)]
pub struct Trace {
    events: Vec<SimEvent>,
    record: bool,
    hash: u64,
    len: usize,
}

impl Trace {
    fn new(record: bool) -> Self {
        Trace {
            events: Vec::new(),
            record,
            hash: 0xcbf2_9ce4_8422_2325,
            len: 0,
        }
    }

    fn push(&mut self, ev: SimEvent) {
        let line = ev.line();
        self.hash ^= stable_hash(line.as_bytes());
        self.hash = self.hash.wrapping_mul(0x0000_0100_0000_01b3);
        self.len += 1;
        if self.record {
            self.events.push(ev);
        }
    }

    /// Rolling hash over every recorded event line; a pure function of
    /// (config, workload).
    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn count(&self, pred: impl Fn(&SimEvent) -> bool) -> usize {
        self.events.iter().filter(|e| pred(e)).count()
    }

    /// One tab-separated line per event plus a final `trace_hash=<hex64>`.
    pub fn export(&self, mut w: impl Write) -> std::io::Result<()> {
        for ev in &self.events {
            writeln!(w, "{}", ev.line())?;
        }
        writeln!(w, "trace_hash={:016x}", self.hash)
    }
}

/// Per-node byte and frame accounting.
#[derive(Clone, Debug, Default)]
pub struct NodeStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub frames_dropped: u64,
    /// Bytes of envelope frames only (tag 0x01), excluding gossip and
    /// protocol control traffic.
    pub env_bytes_sent: u64,
    pub env_bytes_received: u64,
    pub connects_refused: u64,
}

/// Events delivered to node logic.
#[derive(Debug)]
pub enum NodeEvent {
    /// A peer's connect attempt completed; the connection is usable.
    InboundConnection(ConnectionId),
    /// A connect this node initiated completed.
    ConnectionEstablished(ConnectionId),
    ConnectFailed {
        id: ConnectionId,
        reason: ConnectError,
    },
    ConnectionClosed(ConnectionId),
    FrameReceived {
        conn: ConnectionId,
        bytes: Vec<u8>,
    },
    /// The frame most recently sent on `conn` finished serializing; the
    /// connection direction is free again.
    SendComplete { conn: ConnectionId },
    Timer { token: u64 },
}

/// Node logic driven by the simulator.
pub trait NodeActor {
    fn on_start(&mut self, ctx: &mut NodeCtx<'_>);
    fn on_event(&mut self, ctx: &mut NodeCtx<'_>, ev: NodeEvent);
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// The transport operations node logic programs against.
pub trait Transport {
    fn now(&self) -> SimTime;
    /// Begins a connect; the outcome arrives later as a node event.
    fn open_connection(&mut self, to: &NodeName, channel: &ChannelName, slot: u32)
        -> ConnectionId;
    /// Queues a frame; delivery is asynchronous, FIFO per connection
    /// direction, best effort.
    fn send(&mut self, conn: &ConnectionId, bytes: Vec<u8>) -> Result<(), SendError>;
    /// Graceful close: frames this end already queued still flush to the
    /// peer, then the peer observes the close.
    fn close(&mut self, conn: &ConnectionId);
    fn set_timer(&mut self, after: Duration, token: u64);
    /// Non-blocking lookup of the open connection this node initiated for
    /// the triple.
    fn cache_lookup(
        &self,
        peer: &NodeName,
        channel: &ChannelName,
        slot: u32,
    ) -> Option<ConnectionId>;
    /// Lookup of an open connection the peer initiated toward this node.
    fn cache_lookup_inbound(
        &self,
        peer: &NodeName,
        channel: &ChannelName,
        slot: u32,
    ) -> Option<ConnectionId>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Connecting,
    Open,
    /// One side closed; `by` stopped reading, frames toward it are lost.
    Closing,
    Closed,
}

#[derive(Debug)]
struct ConnState {
    generation: u64,
    phase: Phase,
    closer: Option<NodeName>,
    /// Serialization cursor per direction: src->dst and dst->src.
    busy_out: SimTime,
    busy_in: SimTime,
}

#[derive(Debug)]
struct NodeMeta {
    alive: bool,
    incarnation: u64,
    group: Option<usize>,
    accept_pending: usize,
    accept_busy: SimTime,
    stats: NodeStats,
}

impl NodeMeta {
    fn new() -> Self {
        NodeMeta {
            alive: true,
            incarnation: 0,
            group: None,
            accept_pending: 0,
            accept_busy: SimTime::ZERO,
            stats: NodeStats::default(),
        }
    }
}

#[derive(Debug)]
enum Pending {
    ConnectArrive {
        id: ConnectionId,
    },
    AcceptFinish {
        id: ConnectionId,
    },
    Established {
        id: ConnectionId,
    },
    ConnectFailed {
        id: ConnectionId,
        reason: ConnectError,
    },
    FrameSent {
        id: ConnectionId,
        from: NodeName,
        bytes: Vec<u8>,
    },
    FrameArrive {
        id: ConnectionId,
        to: NodeName,
        bytes: Vec<u8>,
        dropped: bool,
    },
    PeerClosed {
        id: ConnectionId,
        peer: NodeName,
    },
    Timer {
        node: NodeName,
        incarnation: u64,
        token: u64,
    },
}

struct Scheduled {
    time: SimTime,
    seq: u64,
    payload: Pending,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Simulator state shared with node callbacks through [`NodeCtx`].
pub struct SimCore {
    cfg: SimConfig,
    now: SimTime,
    queue: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    rng: ChaCha12Rng,
    conns: BTreeMap<ConnKey, ConnState>,
    nodes: BTreeMap<NodeName, NodeMeta>,
    trace: Trace,
}

impl SimCore {
    fn schedule(&mut self, at: SimTime, payload: Pending) {
        debug_assert!(at >= self.now);
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled {
            time: at,
            seq,
            payload,
        }));
    }

    fn rtt(&self, a: &NodeName, b: &NodeName) -> Duration {
        self.cfg
            .per_link_rtt
            .get(&(a.clone(), b.clone()))
            .or_else(|| self.cfg.per_link_rtt.get(&(b.clone(), a.clone())))
            .copied()
            .unwrap_or(self.cfg.default_rtt)
    }

    fn one_way(&mut self, a: &NodeName, b: &NodeName) -> Duration {
        let base = self.rtt(a, b) / 2;
        if self.cfg.latency_jitter {
            let factor = self.rng.gen_range(900_000u64..=1_100_000);
            Duration::from_nanos((base.as_nanos() as u64).saturating_mul(factor) / 1_000_000)
        } else {
            base
        }
    }

    fn blocked(&self, a: &NodeName, b: &NodeName) -> bool {
        match (
            self.nodes.get(a).and_then(|m| m.group),
            self.nodes.get(b).and_then(|m| m.group),
        ) {
            (Some(ga), Some(gb)) => ga != gb,
            _ => false,
        }
    }

    fn is_alive(&self, n: &NodeName) -> bool {
        self.nodes.get(n).map_or(false, |m| m.alive)
    }

    fn trace_event(
        &mut self,
        kind: SimEventKind,
        src: &NodeName,
        dst: &NodeName,
        channel: &ChannelName,
        slot: u32,
        size: usize,
        detail: &str,
    ) {
        self.trace.push(SimEvent {
            time: self.now,
            kind,
            src: src.as_str().to_string(),
            dst: dst.as_str().to_string(),
            channel: channel.as_str().to_string(),
            slot,
            size,
            detail: detail.to_string(),
        });
    }

    fn serialization_delay(&self, len: usize) -> Duration {
        match self.cfg.bandwidth_bytes_per_sec {
            Some(bw) if bw > 0 => {
                Duration::from_nanos((len as u128 * 1_000_000_000 / bw as u128) as u64)
            }
            _ => Duration::ZERO,
        }
    }

    /// Immediate teardown; frames in flight are lost.
    fn force_disconnect(&mut self, key: &ConnKey, detail: &str) -> Option<ConnectionId> {
        let state = self.conns.get_mut(key)?;
        if matches!(state.phase, Phase::Closed) {
            return None;
        }
        state.phase = Phase::Closed;
        let id = ConnectionId {
            src: key.src.clone(),
            dst: key.dst.clone(),
            channel: key.channel.clone(),
            slot: key.slot,
            generation: state.generation,
        };
        self.trace_event(
            SimEventKind::Disconnect,
            &key.src,
            &key.dst,
            &key.channel,
            key.slot,
            0,
            detail,
        );
        Some(id)
    }

    fn frame_label(bytes: &[u8]) -> &'static str {
        match bytes.get(4) {
            Some(&TAG_ENVELOPE) => "env",
            Some(&TAG_GOSSIP) => "gossip",
            Some(&TAG_CONTROL) => match bytes.get(5) {
                Some(0x01) => "ctl:join",
                Some(0x02) => "ctl:forward_join",
                Some(0x03) => "ctl:neighbor",
                Some(0x04) => "ctl:neighbor_reply",
                Some(0x05) => "ctl:disconnect",
                Some(0x06) => "ctl:shuffle",
                Some(0x07) => "ctl:shuffle_reply",
                Some(0x08) => "ctl:gossip",
                Some(0x09) => "ctl:ihave",
                Some(0x0a) => "ctl:graft",
                Some(0x0b) => "ctl:prune",
                Some(0x0c) => "ctl:heartbeat",
                Some(0x0d) => "ctl:leave",
                Some(0x0e) => "ctl:subscribe",
                Some(0x0f) => "ctl:publish",
                Some(0x10) => "ctl:deliver",
                _ => "ctl",
            },
            _ => "raw",
        }
    }
}

/// Per-callback view of the simulator for one node.
pub struct NodeCtx<'a> {
    core: &'a mut SimCore,
    node: NodeName,
}

impl<'a> NodeCtx<'a> {
    pub fn node(&self) -> &NodeName {
        &self.node
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.core.rng
    }

    pub fn stats(&self) -> &NodeStats {
        &self.core.nodes[&self.node].stats
    }
}

impl<'a> Transport for NodeCtx<'a> {
    fn now(&self) -> SimTime {
        self.core.now
    }

    fn open_connection(
        &mut self,
        to: &NodeName,
        channel: &ChannelName,
        slot: u32,
    ) -> ConnectionId {
        let key = ConnKey {
            src: self.node.clone(),
            dst: to.clone(),
            channel: channel.clone(),
            slot,
        };
        // Reopening a live key supersedes the old generation.
        if let Some(old) = self.core.force_disconnect(&key, "superseded") {
            let peer = old.dst.clone();
            let now = self.core.now;
            self.core.schedule(
                now,
                Pending::PeerClosed {
                    id: old,
                    peer,
                },
            );
        }
        let state = self
            .core
            .conns
            .entry(key.clone())
            .or_insert(ConnState {
                generation: 0,
                phase: Phase::Closed,
                closer: None,
                busy_out: SimTime::ZERO,
                busy_in: SimTime::ZERO,
            });
        state.generation += 1;
        state.phase = Phase::Connecting;
        state.closer = None;
        state.busy_out = self.core.now;
        state.busy_in = self.core.now;
        let id = ConnectionId {
            src: key.src,
            dst: key.dst,
            channel: key.channel,
            slot,
            generation: state.generation,
        };
        self.core.trace_event(
            SimEventKind::Connect,
            &id.src,
            &id.dst,
            &id.channel,
            id.slot,
            0,
            "",
        );
        let delay = self.core.one_way(&id.src, &id.dst);
        let at = self.core.now + delay;
        self.core.schedule(at, Pending::ConnectArrive { id: id.clone() });
        id
    }

    fn send(&mut self, conn: &ConnectionId, bytes: Vec<u8>) -> Result<(), SendError> {
        let ser = self.core.serialization_delay(bytes.len());
        let state = self
            .core
            .conns
            .get_mut(&conn.key())
            .ok_or(SendError::ClosedConnection)?;
        if state.generation != conn.generation || state.phase != Phase::Open {
            return Err(SendError::ClosedConnection);
        }
        let outbound = self.node == conn.src;
        debug_assert!(outbound || self.node == conn.dst);
        let busy = if outbound {
            &mut state.busy_out
        } else {
            &mut state.busy_in
        };
        let start = (*busy).max(self.core.now);
        let finish = start + ser;
        *busy = finish;
        let from = self.node.clone();
        self.core.schedule(
            finish,
            Pending::FrameSent {
                id: conn.clone(),
                from,
                bytes,
            },
        );
        Ok(())
    }

    fn close(&mut self, conn: &ConnectionId) {
        let Some(state) = self.core.conns.get_mut(&conn.key()) else {
            return;
        };
        if state.generation != conn.generation
            || matches!(state.phase, Phase::Closed | Phase::Closing)
        {
            return;
        }
        let was_connecting = state.phase == Phase::Connecting;
        state.phase = Phase::Closing;
        state.closer = Some(self.node.clone());
        let outbound = self.node == conn.src;
        let flush_at = if outbound {
            state.busy_out
        } else {
            state.busy_in
        }
        .max(self.core.now);
        if was_connecting {
            // Abandoned before establishment: nothing to flush, no peer event.
            state.phase = Phase::Closed;
            return;
        }
        let peer = conn.peer_of(&self.node).clone();
        let delay = self.core.one_way(&self.node, &peer);
        self.core.schedule(
            flush_at + delay,
            Pending::PeerClosed {
                id: conn.clone(),
                peer,
            },
        );
    }

    fn set_timer(&mut self, after: Duration, token: u64) {
        let incarnation = self.core.nodes[&self.node].incarnation;
        let node = self.node.clone();
        let at = self.core.now + after;
        self.core.schedule(
            at,
            Pending::Timer {
                node,
                incarnation,
                token,
            },
        );
    }

    fn cache_lookup(
        &self,
        peer: &NodeName,
        channel: &ChannelName,
        slot: u32,
    ) -> Option<ConnectionId> {
        let key = ConnKey {
            src: self.node.clone(),
            dst: peer.clone(),
            channel: channel.clone(),
            slot,
        };
        let state = self.core.conns.get(&key)?;
        (state.phase == Phase::Open).then(|| ConnectionId {
            src: key.src,
            dst: key.dst,
            channel: key.channel,
            slot,
            generation: state.generation,
        })
    }

    fn cache_lookup_inbound(
        &self,
        peer: &NodeName,
        channel: &ChannelName,
        slot: u32,
    ) -> Option<ConnectionId> {
        let key = ConnKey {
            src: peer.clone(),
            dst: self.node.clone(),
            channel: channel.clone(),
            slot,
        };
        let state = self.core.conns.get(&key)?;
        (state.phase == Phase::Open).then(|| ConnectionId {
            src: key.src,
            dst: key.dst,
            channel: key.channel,
            slot,
            generation: state.generation,
        })
    }
}

struct ActorSlot {
    actor: Box<dyn NodeActor>,
}

/// The simulator: event queue plus the registered node actors.
pub struct Sim {
    core: SimCore,
    actors: BTreeMap<NodeName, ActorSlot>,
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Self {
        let rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let record = cfg.record_trace;
        Sim {
            core: SimCore {
                cfg,
                now: SimTime::ZERO,
                queue: BinaryHeap::new(),
                seq: 0,
                rng,
                conns: BTreeMap::new(),
                nodes: BTreeMap::new(),
                trace: Trace::new(record),
            },
            actors: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.core.cfg
    }

    pub fn now(&self) -> SimTime {
        self.core.now
    }

    pub fn trace(&self) -> &Trace {
        &self.core.trace
    }

    pub fn stats(&self, node: &NodeName) -> &NodeStats {
        &self.core.nodes[node].stats
    }

    pub fn node_names(&self) -> Vec<NodeName> {
        self.actors.keys().cloned().collect()
    }

    /// Registers a node without starting it; `start` runs all `on_start`
    /// hooks in name order.
    pub fn add_node(&mut self, name: impl Into<NodeName>, actor: Box<dyn NodeActor>) {
        let name = name.into();
        self.core.nodes.insert(name.clone(), NodeMeta::new());
        self.actors.insert(name, ActorSlot { actor });
    }

    pub fn start(&mut self) {
        let names: Vec<NodeName> = self.actors.keys().cloned().collect();
        for name in names {
            let slot = self.actors.get_mut(&name).expect("registered actor");
            let mut ctx = NodeCtx {
                core: &mut self.core,
                node: name,
            };
            slot.actor.on_start(&mut ctx);
        }
    }

    /// Runs node logic outside event processing, at the current virtual time.
    pub fn with_node<R>(
        &mut self,
        name: &NodeName,
        f: impl FnOnce(&mut dyn NodeActor, &mut NodeCtx<'_>) -> R,
    ) -> R {
        let slot = self.actors.get_mut(name).expect("unknown node");
        let mut ctx = NodeCtx {
            core: &mut self.core,
            node: name.clone(),
        };
        f(slot.actor.as_mut(), &mut ctx)
    }

    /// Stops a node: every connection is torn down, queued events for it are
    /// discarded on delivery and future connects are refused.
    pub fn kill(&mut self, name: &NodeName) {
        {
            let meta = self.core.nodes.get_mut(name).expect("unknown node");
            if !meta.alive {
                return;
            }
            meta.alive = false;
            meta.incarnation += 1;
        }
        let keys: Vec<ConnKey> = self
            .core
            .conns
            .iter()
            .filter(|(k, s)| {
                (k.src == *name || k.dst == *name)
                    && !matches!(s.phase, Phase::Closed)
            })
            .map(|(k, _)| k.clone())
            .collect();
        for key in keys {
            if let Some(id) = self.core.force_disconnect(&key, "peer_killed") {
                let peer = id.peer_of(name).clone();
                self.deliver_now(&peer, NodeEvent::ConnectionClosed(id));
            }
        }
    }

    /// Brings a previously killed node back with fresh state.
    pub fn restart(&mut self, name: &NodeName, actor: Box<dyn NodeActor>) {
        let meta = self.core.nodes.get_mut(name).expect("unknown node");
        assert!(!meta.alive, "restart requires a killed node");
        meta.alive = true;
        meta.incarnation += 1;
        meta.accept_pending = 0;
        meta.accept_busy = self.core.now;
        self.actors.insert(name.clone(), ActorSlot { actor });
        let slot = self.actors.get_mut(name).unwrap();
        let mut ctx = NodeCtx {
            core: &mut self.core,
            node: name.clone(),
        };
        slot.actor.on_start(&mut ctx);
    }

    /// Splits connectivity: frames and connects between different groups are
    /// dropped until `heal`. Nodes in no group keep full connectivity.
    pub fn partition(&mut self, groups: &[Vec<NodeName>]) {
        for meta in self.core.nodes.values_mut() {
            meta.group = None;
        }
        for (gi, group) in groups.iter().enumerate() {
            for n in group {
                self.core
                    .nodes
                    .get_mut(n)
                    .expect("unknown node in partition group")
                    .group = Some(gi);
            }
        }
        let detail = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|n| n.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("|");
        let origin = NodeName::new("-");
        self.core.trace_event(
            SimEventKind::Partition,
            &origin,
            &origin,
            &ChannelName::new("-"),
            0,
            0,
            &detail,
        );
        // Existing cross-group connections break immediately.
        let keys: Vec<ConnKey> = self
            .core
            .conns
            .iter()
            .filter(|(k, s)| !matches!(s.phase, Phase::Closed) && self.core.blocked(&k.src, &k.dst))
            .map(|(k, _)| k.clone())
            .collect();
        for key in keys {
            if let Some(id) = self.core.force_disconnect(&key, "partition") {
                self.deliver_now(&id.src.clone(), NodeEvent::ConnectionClosed(id.clone()));
                self.deliver_now(&id.dst.clone(), NodeEvent::ConnectionClosed(id));
            }
        }
    }

    pub fn heal(&mut self) {
        for meta in self.core.nodes.values_mut() {
            meta.group = None;
        }
        let origin = NodeName::new("-");
        self.core.trace_event(
            SimEventKind::Heal,
            &origin,
            &origin,
            &ChannelName::new("-"),
            0,
            0,
            "",
        );
    }

    fn deliver_now(&mut self, node: &NodeName, ev: NodeEvent) {
        if !self.core.is_alive(node) {
            return;
        }
        let Some(slot) = self.actors.get_mut(node) else {
            return;
        };
        let mut ctx = NodeCtx {
            core: &mut self.core,
            node: node.clone(),
        };
        slot.actor.on_event(&mut ctx, ev);
    }

    /// Processes the next scheduled event. Returns false when the queue is
    /// empty.
    pub fn step(&mut self) -> bool {
        let Some(Reverse(sched)) = self.core.queue.pop() else {
            return false;
        };
        self.core.now = sched.time;
        match sched.payload {
            Pending::ConnectArrive { id } => self.on_connect_arrive(id),
            Pending::AcceptFinish { id } => self.on_accept_finish(id),
            Pending::Established { id } => {
                if self.conn_current(&id) {
                    self.deliver_now(&id.src.clone(), NodeEvent::ConnectionEstablished(id));
                }
            }
            Pending::ConnectFailed { id, reason } => {
                self.deliver_now(&id.src.clone(), NodeEvent::ConnectFailed { id, reason });
            }
            Pending::FrameSent { id, from, bytes } => self.on_frame_sent(id, from, bytes),
            Pending::FrameArrive {
                id,
                to,
                bytes,
                dropped,
            } => self.on_frame_arrive(id, to, bytes, dropped),
            Pending::PeerClosed { id, peer } => self.on_peer_closed(id, peer),
            Pending::Timer {
                node,
                incarnation,
                token,
            } => {
                let current = self.core.nodes.get(&node).map(|m| (m.alive, m.incarnation));
                if current == Some((true, incarnation)) {
                    self.deliver_now(&node, NodeEvent::Timer { token });
                }
            }
        }
        true
    }

    /// Processes every event with timestamp <= `until` in (time, insertion)
    /// order, then advances the clock to `until`.
    pub fn run_until(&mut self, until: SimTime) {
        loop {
            match self.core.queue.peek() {
                Some(Reverse(s)) if s.time <= until => {
                    self.step();
                }
                _ => break,
            }
        }
        debug_assert!(self.core.now <= until);
        self.core.now = until;
    }

    pub fn run_for(&mut self, d: Duration) {
        let until = self.core.now + d;
        self.run_until(until);
    }

    fn conn_current(&self, id: &ConnectionId) -> bool {
        self.core
            .conns
            .get(&id.key())
            .map_or(false, |s| s.generation == id.generation && s.phase == Phase::Open)
    }

    fn on_connect_arrive(&mut self, id: ConnectionId) {
        let key = id.key();
        {
            let Some(state) = self.core.conns.get(&key) else {
                return;
            };
            if state.generation != id.generation || state.phase != Phase::Connecting {
                return;
            }
        }
        let refuse = |sim: &mut Sim, id: ConnectionId, reason: ConnectError, detail: &str| {
            if let Some(state) = sim.core.conns.get_mut(&id.key()) {
                state.phase = Phase::Closed;
            }
            sim.core.trace_event(
                SimEventKind::Refuse,
                &id.src,
                &id.dst,
                &id.channel,
                id.slot,
                0,
                detail,
            );
            if let Some(meta) = sim.core.nodes.get_mut(&id.dst) {
                meta.stats.connects_refused += 1;
            }
            let delay = sim.core.one_way(&id.dst, &id.src);
            let at = sim.core.now + delay;
            sim.core.schedule(at, Pending::ConnectFailed { id, reason });
        };
        if !self.core.is_alive(&id.dst) || self.core.blocked(&id.src, &id.dst) {
            refuse(self, id, ConnectError::Unreachable, "unreachable");
            return;
        }
        let (pending, capacity) = {
            let meta = self.core.nodes.get(&id.dst).unwrap();
            (meta.accept_pending, self.core.cfg.accept_queue_capacity)
        };
        if pending >= capacity {
            refuse(self, id, ConnectError::Refused, "queue_overflow");
            return;
        }
        let service = Duration::from_nanos(1_000_000 / u64::from(self.core.cfg.accept_service_per_ms.max(1)));
        let meta = self.core.nodes.get_mut(&id.dst).unwrap();
        meta.accept_pending += 1;
        let start = meta.accept_busy.max(self.core.now);
        let done = start + service;
        meta.accept_busy = done;
        self.core.schedule(done, Pending::AcceptFinish { id });
    }

    fn on_accept_finish(&mut self, id: ConnectionId) {
        if let Some(meta) = self.core.nodes.get_mut(&id.dst) {
            meta.accept_pending = meta.accept_pending.saturating_sub(1);
        }
        let key = id.key();
        {
            let Some(state) = self.core.conns.get(&key) else {
                return;
            };
            if state.generation != id.generation || state.phase != Phase::Connecting {
                return;
            }
        }
        if !self.core.is_alive(&id.dst)
            || !self.core.is_alive(&id.src)
            || self.core.blocked(&id.src, &id.dst)
        {
            let reason = ConnectError::Unreachable;
            if let Some(state) = self.core.conns.get_mut(&key) {
                state.phase = Phase::Closed;
            }
            let delay = self.core.one_way(&id.dst, &id.src);
            let at = self.core.now + delay;
            self.core.schedule(at, Pending::ConnectFailed { id, reason });
            return;
        }
        {
            let state = self.core.conns.get_mut(&key).unwrap();
            state.phase = Phase::Open;
            state.busy_out = self.core.now;
            state.busy_in = self.core.now;
        }
        self.core.trace_event(
            SimEventKind::Accept,
            &id.src,
            &id.dst,
            &id.channel,
            id.slot,
            0,
            "",
        );
        let delay = self.core.one_way(&id.dst, &id.src);
        let at = self.core.now + delay;
        self.core
            .schedule(at, Pending::Established { id: id.clone() });
        let dst = id.dst.clone();
        self.deliver_now(&dst, NodeEvent::InboundConnection(id));
    }

    fn on_frame_sent(&mut self, id: ConnectionId, from: NodeName, bytes: Vec<u8>) {
        let key = id.key();
        let usable = self.core.conns.get(&key).map_or(false, |s| {
            s.generation == id.generation && matches!(s.phase, Phase::Open | Phase::Closing)
        });
        if !usable {
            // The connection died while the frame was serializing.
            self.core.trace_event(
                SimEventKind::FrameDropped,
                &from,
                id.peer_of(&from),
                &id.channel,
                id.slot,
                bytes.len(),
                "conn_lost",
            );
            return;
        }
        let label = SimCore::frame_label(&bytes);
        let to = id.peer_of(&from).clone();
        self.core.trace_event(
            SimEventKind::FrameSent,
            &from,
            &to,
            &id.channel,
            id.slot,
            bytes.len(),
            label,
        );
        let is_env = bytes.get(4) == Some(&TAG_ENVELOPE);
        if let Some(meta) = self.core.nodes.get_mut(&from) {
            meta.stats.bytes_sent += bytes.len() as u64;
            meta.stats.frames_sent += 1;
            if is_env {
                meta.stats.env_bytes_sent += bytes.len() as u64;
            }
        }
        let dropped = self.core.cfg.drop_rate > 0.0
            && self.core.rng.gen::<f64>() < self.core.cfg.drop_rate;
        let delay = self.core.one_way(&from, &to);
        let at = self.core.now + delay;
        self.core.schedule(
            at,
            Pending::FrameArrive {
                id: id.clone(),
                to,
                bytes,
                dropped,
            },
        );
        self.deliver_now(&from, NodeEvent::SendComplete { conn: id });
    }

    fn on_frame_arrive(&mut self, id: ConnectionId, to: NodeName, bytes: Vec<u8>, dropped: bool) {
        let from = id.peer_of(&to).clone();
        let mut drop_detail: Option<&'static str> = None;
        if dropped {
            drop_detail = Some("random_drop");
        } else if self.core.blocked(&from, &to) {
            drop_detail = Some("partition");
        } else if !self.core.is_alive(&to) {
            drop_detail = Some("peer_down");
        } else {
            let state = self.core.conns.get(&id.key());
            let deliverable = state.map_or(false, |s| {
                s.generation == id.generation
                    && match s.phase {
                        Phase::Open => true,
                        // After a graceful close, frames flushed toward the
                        // surviving side still arrive; frames toward the
                        // closer are lost.
                        Phase::Closing => s.closer.as_ref() != Some(&to),
                        _ => false,
                    }
            });
            if !deliverable {
                drop_detail = Some("conn_closed");
            }
        }
        if let Some(detail) = drop_detail {
            self.core.trace_event(
                SimEventKind::FrameDropped,
                &from,
                &to,
                &id.channel,
                id.slot,
                bytes.len(),
                detail,
            );
            if let Some(meta) = self.core.nodes.get_mut(&to) {
                meta.stats.frames_dropped += 1;
            }
            return;
        }
        let label = SimCore::frame_label(&bytes);
        self.core.trace_event(
            SimEventKind::FrameDelivered,
            &from,
            &to,
            &id.channel,
            id.slot,
            bytes.len(),
            label,
        );
        let is_env = bytes.get(4) == Some(&TAG_ENVELOPE);
        if let Some(meta) = self.core.nodes.get_mut(&to) {
            meta.stats.bytes_received += bytes.len() as u64;
            meta.stats.frames_received += 1;
            if is_env {
                meta.stats.env_bytes_received += bytes.len() as u64;
            }
        }
        self.deliver_now(&to, NodeEvent::FrameReceived { conn: id, bytes });
    }

    fn on_peer_closed(&mut self, id: ConnectionId, peer: NodeName) {
        let key = id.key();
        let Some(state) = self.core.conns.get_mut(&key) else {
            return;
        };
        if state.generation != id.generation {
            return;
        }
        if !matches!(state.phase, Phase::Closing | Phase::Closed) {
            return;
        }
        let was_closing = state.phase == Phase::Closing;
        state.phase = Phase::Closed;
        if was_closing {
            self.core.trace_event(
                SimEventKind::Disconnect,
                &id.src,
                &id.dst,
                &id.channel,
                id.slot,
                0,
                "close",
            );
            self.deliver_now(&peer, NodeEvent::ConnectionClosed(id));
        }
    }
}
