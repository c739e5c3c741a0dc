//! Binary frame codec shared by every backend.
//!
//! Layout, bit-exact:
//!
//! ```text
//! frame   := u32-BE total_len, u8 tag, body          (total_len = 1 + body len)
//! tag     := 0x01 envelope | 0x02 membership gossip | 0x03 protocol control
//! string  := u16-BE len, UTF-8 bytes
//! blob    := u32-BE len, raw bytes                   (payloads, partition keys)
//! number  := u64-BE unless noted
//! ```
//!
//! Envelope payload bytes are framed as-is, never re-encoded. Control frames
//! carry a one-byte sub-tag per protocol message kind.

use thiserror::Error;

use crate::types::{
    ChannelName, Envelope, Member, NodeName, NodeSpec, NodeTag,
};

/// Default ceiling on a single frame; comfortably above 1MB payloads.
pub const DEFAULT_MAX_FRAME: usize = 16 * 1024 * 1024;

/// Bytes before the payload's own bytes in an envelope frame with no
/// partition key: length word, tag, four string length prefixes, the
/// key-presence byte, seq and the payload length word.
pub fn envelope_header_len(e: &Envelope) -> usize {
    let strings = e.src.as_str().len()
        + e.dst_node.as_str().len()
        + e.dst_name.len()
        + e.channel.as_str().len()
        + 4 * 2;
    let key = match &e.partition_key {
        Some(k) => 1 + 4 + k.len(),
        None => 1,
    };
    4 + 1 + strings + key + 8 + 4
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated frame")]
    Truncated,
    #[error("frame length field disagrees with input length")]
    LengthMismatch,
    #[error("frame exceeds the {limit} byte limit ({got} bytes)")]
    TooLarge { limit: usize, got: usize },
    #[error("invalid UTF-8 in string field")]
    BadUtf8,
    #[error("unknown frame tag {0:#04x}")]
    UnknownTag(u8),
    #[error("unknown control sub-tag {0:#04x}")]
    UnknownControl(u8),
    #[error("invalid field value: {0}")]
    BadValue(&'static str),
}

pub const TAG_ENVELOPE: u8 = 0x01;
pub const TAG_GOSSIP: u8 = 0x02;
pub const TAG_CONTROL: u8 = 0x03;

/// Identifier of one broadcast: the originating root plus a per-root counter.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BroadcastId {
    pub root: NodeName,
    pub counter: u64,
}

/// Protocol control messages (frame tag 0x03), one sub-tag per kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ControlMsg {
    /// Membership join request to a contact node.
    Join { joiner: NodeSpec },
    /// Random walk advertising a joiner through the overlay.
    ForwardJoin { joiner: NodeSpec, ttl: u8 },
    /// Request to become an active neighbor.
    Neighbor { high_priority: bool },
    NeighborReply { accepted: bool },
    /// Graceful demotion of an active link.
    Disconnect,
    Shuffle {
        origin: NodeSpec,
        ttl: u8,
        sample: Vec<NodeSpec>,
    },
    ShuffleReply { sample: Vec<NodeSpec> },
    /// Broadcast payload pushed along the eager tree.
    Gossip {
        id: BroadcastId,
        round: u32,
        payload: Vec<u8>,
    },
    /// Lazy announcement that a broadcast exists.
    IHave { id: BroadcastId, round: u32 },
    /// Request to replay a missed broadcast and promote the link to eager.
    Graft { id: BroadcastId, round: u32 },
    /// Demote the sending link to lazy after a duplicate delivery.
    Prune,
    /// Tree-maintenance broadcast flooded like `Gossip`.
    Heartbeat {
        id: BroadcastId,
        round: u32,
        timestamp: u64,
    },
    /// Tells `target` to leave the cluster; relayed like a point-to-point
    /// message where the topology requires it.
    Leave { target: NodeName },
    SubscribeQueue { queue: String },
    PublishQueue { queue: String, body: Vec<u8> },
    DeliverQueue { queue: String, body: Vec<u8> },
}

const CTL_JOIN: u8 = 0x01;
const CTL_FORWARD_JOIN: u8 = 0x02;
const CTL_NEIGHBOR: u8 = 0x03;
const CTL_NEIGHBOR_REPLY: u8 = 0x04;
const CTL_DISCONNECT: u8 = 0x05;
const CTL_SHUFFLE: u8 = 0x06;
const CTL_SHUFFLE_REPLY: u8 = 0x07;
const CTL_GOSSIP: u8 = 0x08;
const CTL_IHAVE: u8 = 0x09;
const CTL_GRAFT: u8 = 0x0a;
const CTL_PRUNE: u8 = 0x0b;
const CTL_HEARTBEAT: u8 = 0x0c;
const CTL_LEAVE: u8 = 0x0d;
const CTL_SUBSCRIBE: u8 = 0x0e;
const CTL_PUBLISH: u8 = 0x0f;
const CTL_DELIVER: u8 = 0x10;

/// Everything that can travel over one connection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Frame {
    Envelope(Envelope),
    Gossip(Vec<Member>),
    Control(ControlMsg),
}

impl Frame {
    /// Short label recorded in trace event details.
    pub fn kind_label(&self) -> &'static str {
        match self {
            Frame::Envelope(_) => "env",
            Frame::Gossip(_) => "gossip",
            Frame::Control(c) => match c {
                ControlMsg::Join { .. } => "ctl:join",
                ControlMsg::ForwardJoin { .. } => "ctl:forward_join",
                ControlMsg::Neighbor { .. } => "ctl:neighbor",
                ControlMsg::NeighborReply { .. } => "ctl:neighbor_reply",
                ControlMsg::Disconnect => "ctl:disconnect",
                ControlMsg::Shuffle { .. } => "ctl:shuffle",
                ControlMsg::ShuffleReply { .. } => "ctl:shuffle_reply",
                ControlMsg::Gossip { .. } => "ctl:gossip",
                ControlMsg::IHave { .. } => "ctl:ihave",
                ControlMsg::Graft { .. } => "ctl:graft",
                ControlMsg::Prune => "ctl:prune",
                ControlMsg::Heartbeat { .. } => "ctl:heartbeat",
                ControlMsg::Leave { .. } => "ctl:leave",
                ControlMsg::SubscribeQueue { .. } => "ctl:subscribe",
                ControlMsg::PublishQueue { .. } => "ctl:publish",
                ControlMsg::DeliverQueue { .. } => "ctl:deliver",
            },
        }
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        // Reserve the length word up front; patched at the end.
        Writer { buf: vec![0; 4] }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn string(&mut self, s: &str) -> Result<(), WireError> {
        let len = u16::try_from(s.len()).map_err(|_| WireError::BadValue("string too long"))?;
        self.u16(len);
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }

    fn blob(&mut self, b: &[u8]) -> Result<(), WireError> {
        let len = u32::try_from(b.len()).map_err(|_| WireError::BadValue("blob too long"))?;
        self.u32(len);
        self.buf.extend_from_slice(b);
        Ok(())
    }

    fn spec(&mut self, s: &NodeSpec) -> Result<(), WireError> {
        self.string(s.name.as_str())?;
        self.string(&s.address)?;
        self.u8(s.tag.wire_byte());
        self.u64(s.epoch);
        Ok(())
    }

    fn broadcast_id(&mut self, id: &BroadcastId) -> Result<(), WireError> {
        self.string(id.root.as_str())?;
        self.u64(id.counter);
        Ok(())
    }

    fn finish(mut self, limit: usize) -> Result<Vec<u8>, WireError> {
        let total = self.buf.len() - 4;
        if self.buf.len() > limit {
            return Err(WireError::TooLarge {
                limit,
                got: self.buf.len(),
            });
        }
        let len = u32::try_from(total).map_err(|_| WireError::BadValue("frame too long"))?;
        self.buf[..4].copy_from_slice(&len.to_be_bytes());
        Ok(self.buf)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.buf.len() {
            return Err(WireError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, WireError> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::BadUtf8)
    }

    fn blob(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn spec(&mut self) -> Result<NodeSpec, WireError> {
        let name = self.string()?;
        let address = self.string()?;
        let tag =
            NodeTag::from_wire_byte(self.u8()?).ok_or(WireError::BadValue("node tag"))?;
        let epoch = self.u64()?;
        Ok(NodeSpec::new(name, address, tag).with_epoch(epoch))
    }

    fn broadcast_id(&mut self) -> Result<BroadcastId, WireError> {
        let root = NodeName::new(self.string()?);
        let counter = self.u64()?;
        Ok(BroadcastId { root, counter })
    }

    fn bool(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(WireError::BadValue("boolean")),
        }
    }

    fn done(&self) -> Result<(), WireError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(WireError::LengthMismatch)
        }
    }
}

fn write_specs(w: &mut Writer, specs: &[NodeSpec]) -> Result<(), WireError> {
    let n = u16::try_from(specs.len()).map_err(|_| WireError::BadValue("too many records"))?;
    w.u16(n);
    for s in specs {
        w.spec(s)?;
    }
    Ok(())
}

fn read_specs(r: &mut Reader<'_>) -> Result<Vec<NodeSpec>, WireError> {
    let n = r.u16()? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        out.push(r.spec()?);
    }
    Ok(out)
}

/// Encodes a frame with the default size limit.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, WireError> {
    encode_frame_limited(frame, DEFAULT_MAX_FRAME)
}

pub fn encode_frame_limited(frame: &Frame, limit: usize) -> Result<Vec<u8>, WireError> {
    let mut w = Writer::new();
    match frame {
        Frame::Envelope(e) => {
            w.u8(TAG_ENVELOPE);
            w.string(e.src.as_str())?;
            w.string(e.dst_node.as_str())?;
            w.string(&e.dst_name)?;
            w.string(e.channel.as_str())?;
            match &e.partition_key {
                Some(k) => {
                    w.u8(1);
                    w.blob(k)?;
                }
                None => w.u8(0),
            }
            w.u64(e.seq);
            w.blob(&e.payload)?;
        }
        Frame::Gossip(members) => {
            w.u8(TAG_GOSSIP);
            let n = u16::try_from(members.len())
                .map_err(|_| WireError::BadValue("too many records"))?;
            w.u16(n);
            for m in members {
                w.spec(&m.spec)?;
                w.u8(u8::from(m.leaving));
            }
        }
        Frame::Control(c) => {
            w.u8(TAG_CONTROL);
            match c {
                ControlMsg::Join { joiner } => {
                    w.u8(CTL_JOIN);
                    w.spec(joiner)?;
                }
                ControlMsg::ForwardJoin { joiner, ttl } => {
                    w.u8(CTL_FORWARD_JOIN);
                    w.spec(joiner)?;
                    w.u8(*ttl);
                }
                ControlMsg::Neighbor { high_priority } => {
                    w.u8(CTL_NEIGHBOR);
                    w.u8(u8::from(*high_priority));
                }
                ControlMsg::NeighborReply { accepted } => {
                    w.u8(CTL_NEIGHBOR_REPLY);
                    w.u8(u8::from(*accepted));
                }
                ControlMsg::Disconnect => w.u8(CTL_DISCONNECT),
                ControlMsg::Shuffle {
                    origin,
                    ttl,
                    sample,
                } => {
                    w.u8(CTL_SHUFFLE);
                    w.spec(origin)?;
                    w.u8(*ttl);
                    write_specs(&mut w, sample)?;
                }
                ControlMsg::ShuffleReply { sample } => {
                    w.u8(CTL_SHUFFLE_REPLY);
                    write_specs(&mut w, sample)?;
                }
                ControlMsg::Gossip { id, round, payload } => {
                    w.u8(CTL_GOSSIP);
                    w.broadcast_id(id)?;
                    w.u32(*round);
                    w.blob(payload)?;
                }
                ControlMsg::IHave { id, round } => {
                    w.u8(CTL_IHAVE);
                    w.broadcast_id(id)?;
                    w.u32(*round);
                }
                ControlMsg::Graft { id, round } => {
                    w.u8(CTL_GRAFT);
                    w.broadcast_id(id)?;
                    w.u32(*round);
                }
                ControlMsg::Prune => w.u8(CTL_PRUNE),
                ControlMsg::Heartbeat {
                    id,
                    round,
                    timestamp,
                } => {
                    w.u8(CTL_HEARTBEAT);
                    w.broadcast_id(id)?;
                    w.u32(*round);
                    w.u64(*timestamp);
                }
                ControlMsg::Leave { target } => {
                    w.u8(CTL_LEAVE);
                    w.string(target.as_str())?;
                }
                ControlMsg::SubscribeQueue { queue } => {
                    w.u8(CTL_SUBSCRIBE);
                    w.string(queue)?;
                }
                ControlMsg::PublishQueue { queue, body } => {
                    w.u8(CTL_PUBLISH);
                    w.string(queue)?;
                    w.blob(body)?;
                }
                ControlMsg::DeliverQueue { queue, body } => {
                    w.u8(CTL_DELIVER);
                    w.string(queue)?;
                    w.blob(body)?;
                }
            }
        }
    }
    w.finish(limit)
}

/// Decodes exactly one frame produced by [`encode_frame`].
///
/// Fails with a malformed-frame error on truncated or over-length input.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    decode_frame_limited(bytes, DEFAULT_MAX_FRAME)
}

pub fn decode_frame_limited(bytes: &[u8], limit: usize) -> Result<Frame, WireError> {
    if bytes.len() > limit {
        return Err(WireError::TooLarge {
            limit,
            got: bytes.len(),
        });
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    let total = r.u32()? as usize;
    if total != bytes.len() - 4 {
        return Err(WireError::LengthMismatch);
    }
    let tag = r.u8()?;
    let frame = match tag {
        TAG_ENVELOPE => {
            let src = NodeName::new(r.string()?);
            let dst_node = NodeName::new(r.string()?);
            let dst_name = r.string()?;
            let channel = ChannelName::new(r.string()?);
            let partition_key = if r.bool()? { Some(r.blob()?) } else { None };
            let seq = r.u64()?;
            let payload = r.blob()?;
            Frame::Envelope(Envelope {
                src,
                dst_node,
                dst_name,
                channel,
                partition_key,
                payload,
                seq,
            })
        }
        TAG_GOSSIP => {
            let n = r.u16()? as usize;
            let mut members = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let spec = r.spec()?;
                let leaving = r.bool()?;
                members.push(Member { spec, leaving });
            }
            Frame::Gossip(members)
        }
        TAG_CONTROL => {
            let sub = r.u8()?;
            let msg = match sub {
                CTL_JOIN => ControlMsg::Join { joiner: r.spec()? },
                CTL_FORWARD_JOIN => ControlMsg::ForwardJoin {
                    joiner: r.spec()?,
                    ttl: r.u8()?,
                },
                CTL_NEIGHBOR => ControlMsg::Neighbor {
                    high_priority: r.bool()?,
                },
                CTL_NEIGHBOR_REPLY => ControlMsg::NeighborReply {
                    accepted: r.bool()?,
                },
                CTL_DISCONNECT => ControlMsg::Disconnect,
                CTL_SHUFFLE => ControlMsg::Shuffle {
                    origin: r.spec()?,
                    ttl: r.u8()?,
                    sample: read_specs(&mut r)?,
                },
                CTL_SHUFFLE_REPLY => ControlMsg::ShuffleReply {
                    sample: read_specs(&mut r)?,
                },
                CTL_GOSSIP => ControlMsg::Gossip {
                    id: r.broadcast_id()?,
                    round: r.u32()?,
                    payload: r.blob()?,
                },
                CTL_IHAVE => ControlMsg::IHave {
                    id: r.broadcast_id()?,
                    round: r.u32()?,
                },
                CTL_GRAFT => ControlMsg::Graft {
                    id: r.broadcast_id()?,
                    round: r.u32()?,
                },
                CTL_PRUNE => ControlMsg::Prune,
                CTL_HEARTBEAT => ControlMsg::Heartbeat {
                    id: r.broadcast_id()?,
                    round: r.u32()?,
                    timestamp: r.u64()?,
                },
                CTL_LEAVE => ControlMsg::Leave {
                    target: NodeName::new(r.string()?),
                },
                CTL_SUBSCRIBE => ControlMsg::SubscribeQueue { queue: r.string()? },
                CTL_PUBLISH => ControlMsg::PublishQueue {
                    queue: r.string()?,
                    body: r.blob()?,
                },
                CTL_DELIVER => ControlMsg::DeliverQueue {
                    queue: r.string()?,
                    body: r.blob()?,
                },
                other => return Err(WireError::UnknownControl(other)),
            };
            Frame::Control(msg)
        }
        other => return Err(WireError::UnknownTag(other)),
    };
    r.done()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::NodeTag;
    use proptest::prelude::*;

    fn envelope(payload: Vec<u8>, key: Option<Vec<u8>>) -> Envelope {
        Envelope {
            src: "a".into(),
            dst_node: "b".into(),
            dst_name: "svc".to_string(),
            channel: "default".into(),
            partition_key: key,
            payload,
            seq: 7,
        }
    }

    #[test]
    fn envelope_roundtrip() {
        let e = envelope(b"hello".to_vec(), Some(b"k1".to_vec()));
        let bytes = encode_frame(&Frame::Envelope(e.clone())).unwrap();
        assert_eq!(decode_frame(&bytes).unwrap(), Frame::Envelope(e));
    }

    #[test]
    fn empty_payload_frame_length_matches_layout() {
        let e = envelope(Vec::new(), None);
        let bytes = encode_frame(&Frame::Envelope(e.clone())).unwrap();
        // Layout arithmetic: 4 length + 1 tag + (2+1)src + (2+1)dst + (2+3)name
        // + (2+7)channel + 1 key flag + 8 seq + 4 payload length + 0 payload.
        let expected = 4 + 1 + (2 + 1) + (2 + 1) + (2 + 3) + (2 + 7) + 1 + 8 + 4;
        assert_eq!(bytes.len(), expected);
        assert_eq!(bytes.len(), envelope_header_len(&e));
    }

    #[test]
    fn megabyte_payload_frame_length_is_header_plus_payload() {
        let e = envelope(vec![0xAB; 1_048_576], None);
        let bytes = encode_frame(&Frame::Envelope(e.clone())).unwrap();
        assert_eq!(bytes.len(), envelope_header_len(&e) + 1_048_576);
    }

    #[test]
    fn decode_rejects_truncated_and_padded_input() {
        let e = envelope(b"xyz".to_vec(), None);
        let bytes = encode_frame(&Frame::Envelope(e)).unwrap();
        assert_eq!(
            decode_frame(&bytes[..bytes.len() - 1]),
            Err(WireError::LengthMismatch)
        );
        let mut padded = bytes.clone();
        padded.push(0);
        assert_eq!(decode_frame(&padded), Err(WireError::LengthMismatch));
        // A frame whose inner fields overrun the declared length.
        let mut corrupt = bytes;
        let last = corrupt.len() - 1;
        corrupt[last - 3] = 0xFF; // inflate the payload length word
        assert!(decode_frame(&corrupt).is_err());
    }

    #[test]
    fn encode_enforces_frame_limit() {
        let e = envelope(vec![0; 1024], None);
        let err = encode_frame_limited(&Frame::Envelope(e), 512).unwrap_err();
        assert!(matches!(err, WireError::TooLarge { limit: 512, .. }));
    }

    #[test]
    fn gossip_roundtrip_with_tombstone() {
        let members = vec![
            Member::alive(NodeSpec::new("a", "sim://a", NodeTag::Server).with_epoch(3)),
            Member {
                spec: NodeSpec::new("b", "sim://b", NodeTag::Client).with_epoch(1),
                leaving: true,
            },
        ];
        let bytes = encode_frame(&Frame::Gossip(members.clone())).unwrap();
        assert_eq!(decode_frame(&bytes).unwrap(), Frame::Gossip(members));
    }

    #[test]
    fn unknown_tags_are_rejected() {
        let mut bytes = encode_frame(&Frame::Control(ControlMsg::Prune)).unwrap();
        bytes[4] = 0x7F;
        assert_eq!(decode_frame(&bytes), Err(WireError::UnknownTag(0x7F)));
        let mut bytes = encode_frame(&Frame::Control(ControlMsg::Prune)).unwrap();
        bytes[5] = 0x7F;
        assert_eq!(decode_frame(&bytes), Err(WireError::UnknownControl(0x7F)));
    }

    fn arb_control() -> impl Strategy<Value = ControlMsg> {
        let spec = ("[a-z]{1,8}", 0u64..9).prop_map(|(n, e)| {
            NodeSpec::new(n.as_str(), format!("sim://{n}"), NodeTag::Undefined).with_epoch(e)
        });
        let id = ("[a-z]{1,8}", any::<u64>()).prop_map(|(r, c)| BroadcastId {
            root: NodeName::new(r),
            counter: c,
        });
        prop_oneof![
            spec.clone().prop_map(|joiner| ControlMsg::Join { joiner }),
            (spec.clone(), any::<u8>())
                .prop_map(|(joiner, ttl)| ControlMsg::ForwardJoin { joiner, ttl }),
            any::<bool>().prop_map(|high_priority| ControlMsg::Neighbor { high_priority }),
            (spec, any::<u8>(), prop::collection::vec(("[a-z]{1,4}", 0u64..4).prop_map(
                |(n, e)| NodeSpec::new(n.as_str(), format!("sim://{n}"), NodeTag::Undefined)
                    .with_epoch(e)
            ), 0..5))
                .prop_map(|(origin, ttl, sample)| ControlMsg::Shuffle { origin, ttl, sample }),
            (id.clone(), any::<u32>(), prop::collection::vec(any::<u8>(), 0..64))
                .prop_map(|(id, round, payload)| ControlMsg::Gossip { id, round, payload }),
            (id.clone(), any::<u32>()).prop_map(|(id, round)| ControlMsg::IHave { id, round }),
            (id, any::<u32>(), any::<u64>()).prop_map(|(id, round, timestamp)| {
                ControlMsg::Heartbeat { id, round, timestamp }
            }),
            Just(ControlMsg::Prune),
            ("[a-z]{1,8}", prop::collection::vec(any::<u8>(), 0..64))
                .prop_map(|(queue, body)| ControlMsg::PublishQueue { queue, body }),
        ]
    }

    proptest! {
        #[test]
        fn any_envelope_roundtrips(
            src in "[a-z]{1,12}",
            dst in "[a-z]{1,12}",
            name in "[a-z:/]{0,16}",
            channel in "[a-z]{1,8}",
            key in prop::option::of(prop::collection::vec(any::<u8>(), 0..16)),
            payload in prop::collection::vec(any::<u8>(), 0..256),
            seq in any::<u64>(),
        ) {
            let e = Envelope {
                src: NodeName::new(src),
                dst_node: NodeName::new(dst),
                dst_name: name,
                channel: ChannelName::new(channel),
                partition_key: key,
                payload,
                seq,
            };
            let bytes = encode_frame(&Frame::Envelope(e.clone())).unwrap();
            prop_assert_eq!(decode_frame(&bytes).unwrap(), Frame::Envelope(e));
        }

        #[test]
        fn any_control_roundtrips(msg in arb_control()) {
            let bytes = encode_frame(&Frame::Control(msg.clone())).unwrap();
            prop_assert_eq!(decode_frame(&bytes).unwrap(), Frame::Control(msg));
        }
    }
}
