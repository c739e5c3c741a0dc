//! Shared domain types: node identity, channels, message envelopes and the
//! membership set every backend gossips.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Unique node identifier within a cluster.
///
/// Cheap to clone; compares by string value.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeName(Arc<str>);

impl NodeName {
    pub fn new(name: impl AsRef<str>) -> Self {
        NodeName(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for NodeName {
    fn from(s: &str) -> Self {
        NodeName::new(s)
    }
}

impl From<String> for NodeName {
    fn from(s: String) -> Self {
        NodeName(Arc::from(s))
    }
}

/// Named traffic class.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelName(Arc<str>);

impl ChannelName {
    pub fn new(name: impl AsRef<str>) -> Self {
        ChannelName(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for ChannelName {
    fn from(s: &str) -> Self {
        ChannelName::new(s)
    }
}

/// Name of the channel every configuration carries implicitly.
pub const DEFAULT_CHANNEL: &str = "default";

/// Role a node advertises; connection policies key off it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeTag {
    Server,
    Client,
    Undefined,
}

impl NodeTag {
    pub(crate) fn wire_byte(self) -> u8 {
        match self {
            NodeTag::Undefined => 0,
            NodeTag::Server => 1,
            NodeTag::Client => 2,
        }
    }

    pub(crate) fn from_wire_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(NodeTag::Undefined),
            1 => Some(NodeTag::Server),
            2 => Some(NodeTag::Client),
            _ => None,
        }
    }
}

/// Identity, address, role tag and incarnation epoch of a cluster member.
///
/// `epoch` only increases across restarts of the same name; membership
/// merges use it to pick the newer record.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeSpec {
    pub name: NodeName,
    pub address: String,
    pub tag: NodeTag,
    pub epoch: u64,
}

impl NodeSpec {
    pub fn new(name: impl Into<NodeName>, address: impl Into<String>, tag: NodeTag) -> Self {
        NodeSpec {
            name: name.into(),
            address: address.into(),
            tag,
            epoch: 0,
        }
    }

    pub fn with_epoch(mut self, epoch: u64) -> Self {
        self.epoch = epoch;
        self
    }
}

/// A named traffic class with a parallelism degree and a monotonic flag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelSpec {
    pub name: ChannelName,
    /// Number of connections maintained per peer for this channel. At least 1.
    pub parallelism: u32,
    /// Monotonic channels shed stale backlog: newer messages subsume older
    /// ones.
    pub monotonic: bool,
}

impl ChannelSpec {
    pub fn new(name: impl Into<ChannelName>, parallelism: u32, monotonic: bool) -> Self {
        ChannelSpec {
            name: name.into(),
            parallelism,
            monotonic,
        }
    }

    /// The distinguished channel present in every configuration.
    pub fn default_channel() -> Self {
        ChannelSpec::new(DEFAULT_CHANNEL, 1, false)
    }
}

/// Options accepted by `forward_message` / `cast_message`.
///
/// Only partition-key routing is defined; acknowledgement modes beyond
/// best-effort are not supported.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessageOptions {
    /// Routes keyed traffic to a stable connection slot when the channel's
    /// parallelism is greater than one.
    pub partition_key: Option<Vec<u8>>,
}

/// One addressed application message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub src: NodeName,
    pub dst_node: NodeName,
    /// Registered handler name at the destination.
    pub dst_name: String,
    pub channel: ChannelName,
    pub partition_key: Option<Vec<u8>>,
    /// First byte is the delivery marker (forward vs cast); the rest is the
    /// application payload, framed but never transformed.
    pub payload: Vec<u8>,
    /// Strictly increasing per (src, channel) at the sender.
    pub seq: u64,
}

/// Delivery marker prepended to envelope payloads by the sending facade.
pub const MARKER_FORWARD: u8 = 0x00;
/// Marker for cast-style requests, so handlers can tell the two apart.
pub const MARKER_CAST: u8 = 0x01;

/// Membership record as gossiped: the node spec plus a leave tombstone.
///
/// Plain set union cannot express departure, so an explicit leave is
/// propagated as the same record with `leaving` set; a restarted node
/// overrides its own tombstone by rejoining with a higher epoch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Member {
    pub spec: NodeSpec,
    pub leaving: bool,
}

impl Member {
    pub fn alive(spec: NodeSpec) -> Self {
        Member {
            spec,
            leaving: false,
        }
    }
}

/// Conflict surfaced when two records for one name carry the same epoch but
/// different addresses. The view keeps the record it already had.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeConflict {
    pub name: NodeName,
    pub kept: NodeSpec,
    pub rejected: NodeSpec,
}

/// The set of members known locally, merged by union during gossip.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MembershipView {
    members: BTreeMap<NodeName, Member>,
}

impl MembershipView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(spec: NodeSpec) -> Self {
        let mut v = Self::new();
        v.insert(Member::alive(spec));
        v
    }

    pub fn insert(&mut self, member: Member) {
        self.members.insert(member.spec.name.clone(), member);
    }

    pub fn get(&self, name: &NodeName) -> Option<&Member> {
        self.members.get(name)
    }

    pub fn contains_alive(&self, name: &NodeName) -> bool {
        self.members.get(name).map_or(false, |m| !m.leaving)
    }

    /// All records, tombstones included; gossip frames carry these.
    pub fn records(&self) -> impl Iterator<Item = &Member> {
        self.members.values()
    }

    /// Names of live (non-leaving) members, sorted.
    pub fn live_names(&self) -> Vec<NodeName> {
        self.members
            .values()
            .filter(|m| !m.leaving)
            .map(|m| m.spec.name.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Merges one record into the view.
    ///
    /// Union by name; the record with the higher epoch wins a collision. At
    /// equal epochs a tombstone absorbs the live record, and differing
    /// addresses are reported as a conflict without changing the view.
    /// Returns true when the view changed.
    pub fn merge_record(
        &mut self,
        incoming: &Member,
        conflicts: &mut Vec<MergeConflict>,
    ) -> bool {
        match self.members.get_mut(&incoming.spec.name) {
            None => {
                self.insert(incoming.clone());
                true
            }
            Some(existing) => {
                if incoming.spec.epoch > existing.spec.epoch {
                    if *existing != *incoming {
                        *existing = incoming.clone();
                        return true;
                    }
                    false
                } else if incoming.spec.epoch == existing.spec.epoch {
                    if incoming.spec.address != existing.spec.address {
                        conflicts.push(MergeConflict {
                            name: incoming.spec.name.clone(),
                            kept: existing.spec.clone(),
                            rejected: incoming.spec.clone(),
                        });
                        return false;
                    }
                    if incoming.leaving && !existing.leaving {
                        existing.leaving = true;
                        return true;
                    }
                    false
                } else {
                    false
                }
            }
        }
    }

    /// Set union of two views; see [`MembershipView::merge_record`] for the
    /// per-name rule. Commutative, associative and idempotent.
    pub fn merged(&self, other: &MembershipView) -> MembershipView {
        let mut out = self.clone();
        let mut conflicts = Vec::new();
        for m in other.records() {
            out.merge_record(m, &mut conflicts);
        }
        out
    }
}

/// Merge two membership views by set union, keeping the record with the
/// higher epoch on a name collision.
pub fn merge_views(a: &MembershipView, b: &MembershipView) -> MembershipView {
    a.merged(b)
}

/// The fixed 64-bit hash used for partition-key routing and ring placement:
/// FNV-1a with the standard offset basis 0xcbf29ce484222325 and prime
/// 0x100000001b3. Deterministic across nodes and runs.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Round-robin counter owned by exactly one sender context.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    next: u64,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    fn advance(&mut self) -> u64 {
        let n = self.next;
        self.next = self.next.wrapping_add(1);
        n
    }
}

/// Picks the connection slot for a message.
///
/// Keyed traffic maps to `stable_hash(key) mod parallelism`, a pure function
/// of the key; unkeyed traffic cycles round-robin through all slots.
pub fn connection_slot(key: Option<&[u8]>, parallelism: u32, rr: &mut RoundRobin) -> u32 {
    assert!(parallelism >= 1, "parallelism must be at least 1");
    match key {
        Some(k) => (stable_hash(k) % u64::from(parallelism)) as u32,
        None => (rr.advance() % u64::from(parallelism)) as u32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(name: &str, epoch: u64) -> NodeSpec {
        NodeSpec::new(name, format!("sim://{name}"), NodeTag::Undefined).with_epoch(epoch)
    }

    fn view(names: &[&str]) -> MembershipView {
        let mut v = MembershipView::new();
        for n in names {
            v.insert(Member::alive(spec(n, 0)));
        }
        v
    }

    #[test]
    fn merge_is_union() {
        let ab = view(&["a", "b"]);
        let bc = view(&["b", "c"]);
        let merged = merge_views(&ab, &bc);
        assert_eq!(
            merged.live_names(),
            vec!["a".into(), "b".into(), "c".into()]
        );
    }

    #[test]
    fn merge_identity_and_idempotence() {
        let empty = MembershipView::new();
        let a = view(&["a"]);
        assert_eq!(merge_views(&empty, &a), a);
        assert_eq!(merge_views(&a, &a), a);
    }

    #[test]
    fn higher_epoch_wins() {
        let mut old = MembershipView::new();
        old.insert(Member::alive(spec("a", 1)));
        let mut newer = MembershipView::new();
        newer.insert(Member::alive(spec("a", 2)));
        let m = merge_views(&old, &newer);
        assert_eq!(m.get(&"a".into()).unwrap().spec.epoch, 2);
        // Tombstone with higher epoch also wins over a live record.
        let mut tomb = MembershipView::new();
        tomb.insert(Member {
            spec: spec("a", 3),
            leaving: true,
        });
        let m2 = merge_views(&m, &tomb);
        assert!(m2.get(&"a".into()).unwrap().leaving);
        assert!(m2.live_names().is_empty());
    }

    #[test]
    fn equal_epoch_address_conflict_is_reported() {
        let mut v = MembershipView::new();
        v.insert(Member::alive(spec("a", 1)));
        let other = Member::alive(
            NodeSpec::new("a", "sim://elsewhere", NodeTag::Undefined).with_epoch(1),
        );
        let mut conflicts = Vec::new();
        let changed = v.merge_record(&other, &mut conflicts);
        assert!(!changed);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(v.get(&"a".into()).unwrap().spec.address, "sim://a");
    }

    #[test]
    fn slot_single_parallelism_is_zero() {
        let mut rr = RoundRobin::new();
        assert_eq!(connection_slot(Some(b"anything"), 1, &mut rr), 0);
        assert_eq!(connection_slot(None, 1, &mut rr), 0);
    }

    #[test]
    fn keyed_slot_matches_independent_hash() {
        // Independent FNV-1a oracle, written out rather than calling
        // stable_hash.
        fn fnv(bytes: &[u8]) -> u64 {
            let mut h = 14695981039346656037u64;
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(1099511628211u64);
            }
            h
        }
        let key = b"partition-17";
        let mut rr = RoundRobin::new();
        let s1 = connection_slot(Some(key), 4, &mut rr);
        let s2 = connection_slot(Some(key), 4, &mut rr);
        assert_eq!(s1, s2);
        assert_eq!(u64::from(s1), fnv(key) % 4);
    }

    #[test]
    fn round_robin_covers_all_slots() {
        let mut rr = RoundRobin::new();
        let mut seen: Vec<u32> = (0..3).map(|_| connection_slot(None, 3, &mut rr)).collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    fn arb_member() -> impl Strategy<Value = Member> {
        (
            prop::sample::select(vec!["a", "b", "c", "d", "e"]),
            0u64..4,
            prop::bool::ANY,
        )
            .prop_map(|(name, epoch, leaving)| Member {
                spec: spec(name, epoch),
                leaving,
            })
    }

    fn arb_view() -> impl Strategy<Value = MembershipView> {
        prop::collection::vec(arb_member(), 0..6).prop_map(|ms| {
            // Insert through merge so a view is always internally consistent.
            let mut v = MembershipView::new();
            let mut sink = Vec::new();
            for m in ms {
                v.merge_record(&m, &mut sink);
            }
            v
        })
    }

    proptest! {
        #[test]
        fn merge_commutative(a in arb_view(), b in arb_view()) {
            prop_assert_eq!(merge_views(&a, &b), merge_views(&b, &a));
        }

        #[test]
        fn merge_associative(a in arb_view(), b in arb_view(), c in arb_view()) {
            prop_assert_eq!(
                merge_views(&merge_views(&a, &b), &c),
                merge_views(&a, &merge_views(&b, &c))
            );
        }

        #[test]
        fn merge_idempotent(a in arb_view(), b in arb_view()) {
            let once = merge_views(&a, &b);
            prop_assert_eq!(merge_views(&once, &b), once.clone());
            prop_assert_eq!(merge_views(&once, &once), once);
        }

        #[test]
        fn keyed_slot_is_pure(key in prop::collection::vec(any::<u8>(), 0..32), p in 1u32..16) {
            let mut rr1 = RoundRobin::new();
            let mut rr2 = RoundRobin::new();
            // Advance one counter to show the round-robin state is irrelevant
            // for keyed routing.
            connection_slot(None, p, &mut rr2);
            let s1 = connection_slot(Some(&key), p, &mut rr1);
            let s2 = connection_slot(Some(&key), p, &mut rr2);
            prop_assert_eq!(s1, s2);
            prop_assert!(s1 < p);
        }
    }
}
