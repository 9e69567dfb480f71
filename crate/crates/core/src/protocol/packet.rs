use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Link-layer destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Address {
    Broadcast,
    Node(NodeId),
}

impl Address {
    pub fn is_broadcast(self) -> bool {
        matches!(self, Address::Broadcast)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Address::Broadcast => f.write_str("*"),
            Address::Node(n) => write!(f, "{n}"),
        }
    }
}

/// Identity of an application packet across all of its copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketKey {
    pub source: NodeId,
    pub packet_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CidHeader {
    pub cid_source_id: NodeId,
    pub cid_seq_number: u32,
    pub cl: u16,
    pub prev_hop_id: NodeId,
    pub next_hop_id: Address,
    pub cid_ttl: u16,
}

/// Routing header of a data packet. Carries only the sender's corona level
/// and the packet identity; there is no forwarder list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataHeader {
    pub cl: u16,
    pub packet_id: u32,
    pub destination_id: NodeId,
    pub source_id: NodeId,
}

impl DataHeader {
    pub fn key(&self) -> PacketKey {
        PacketKey {
            source: self.source_id,
            packet_id: self.packet_id,
        }
    }
}

/// MAC acknowledgement, or the sink's explicit end-to-end ACK for a
/// broadcast data frame. `acked_frame` is the link sequence being answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckHeader {
    pub acked_frame: u64,
    pub key: Option<PacketKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Cid(CidHeader),
    Data(DataHeader),
    Ack(AckHeader),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Cid,
    Data,
    Ack,
}

impl PacketKind {
    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Cid => "CID",
            PacketKind::Data => "DATA",
            PacketKind::Ack => "ACK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub payload: Payload,
    /// Link-layer destination (NEXT_HOP_ID).
    pub next_hop: Address,
    pub length_bytes: u32,
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self.payload {
            Payload::Cid(_) => PacketKind::Cid,
            Payload::Data(_) => PacketKind::Data,
            Payload::Ack(_) => PacketKind::Ack,
        }
    }

    pub fn data(&self) -> Option<&DataHeader> {
        match &self.payload {
            Payload::Data(d) => Some(d),
            _ => None,
        }
    }

    pub fn key(&self) -> Option<PacketKey> {
        match &self.payload {
            Payload::Data(d) => Some(d.key()),
            Payload::Ack(a) => a.key,
            Payload::Cid(_) => None,
        }
    }

    pub fn cid(header: CidHeader, length_bytes: u32) -> Packet {
        Packet {
            next_hop: header.next_hop_id,
            payload: Payload::Cid(header),
            length_bytes,
        }
    }

    pub fn data_frame(header: DataHeader, next_hop: Address, length_bytes: u32) -> Packet {
        Packet {
            payload: Payload::Data(header),
            next_hop,
            length_bytes,
        }
    }

    /// Number of routing fields a data header carries. Constant by design.
    pub const DATA_ROUTING_FIELDS: usize = 4;
}
