//! Routing protocol logic: packet formats, neighbour/trust management,
//! fuzzy candidate prioritisation and the node state machine decisions.

pub mod fuzzy;
pub mod neighbor;
pub mod opser;
pub mod packet;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fuzzy::{
    compute_dhd, fuzzy_priority, lqi_normalize, trust_degree, FuzzyDecision, LqiLevel, TrustDegree,
};
pub use neighbor::{trust_update, NeighborEntry, NeighborTable, TrustEvent, TRUST_THRESHOLD};
pub use opser::{
    CidOutcome, Mode, ModeChoice, ModeReason, OpserNodeState, RecvDecision, RouteStatus, SeenCache,
};
pub use packet::{
    AckHeader, Address, CidHeader, DataHeader, NodeId, Packet, PacketKey, PacketKind, Payload,
};

use crate::engine::SimTime;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Opser,
    Oppbcast,
    GreedyUnicast,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [
        ProtocolKind::Opser,
        ProtocolKind::Oppbcast,
        ProtocolKind::GreedyUnicast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Opser => "opser",
            ProtocolKind::Oppbcast => "oppbcast",
            ProtocolKind::GreedyUnicast => "greedy_unicast",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown protocol '{s}'")))
    }
}

/// Why a node gave up on a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    /// Received from a node closer to the sink.
    Upstream,
    Duplicate,
    Energy,
    /// No trustworthy closer neighbour, so not a candidate.
    Ineligible,
    NoCorona,
    UnknownDestination,
    NoPassiveAck,
    ChannelAccessFailure,
    UnicastFailed,
    /// Greedy unicast found no closer neighbour.
    Void,
    QueueFull,
}

impl DropReason {
    pub const ALL: [DropReason; 11] = [
        DropReason::Upstream,
        DropReason::Duplicate,
        DropReason::Energy,
        DropReason::Ineligible,
        DropReason::NoCorona,
        DropReason::UnknownDestination,
        DropReason::NoPassiveAck,
        DropReason::ChannelAccessFailure,
        DropReason::UnicastFailed,
        DropReason::Void,
        DropReason::QueueFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropReason::Upstream => "upstream",
            DropReason::Duplicate => "duplicate",
            DropReason::Energy => "energy",
            DropReason::Ineligible => "ineligible",
            DropReason::NoCorona => "no_corona",
            DropReason::UnknownDestination => "unknown_destination",
            DropReason::NoPassiveAck => "no_passive_ack",
            DropReason::ChannelAccessFailure => "caf",
            DropReason::UnicastFailed => "unicast_failed",
            DropReason::Void => "void",
            DropReason::QueueFull => "queue_full",
        }
    }
}

impl FromStr for DropReason {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        DropReason::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| invalid(format!("unknown drop reason '{s}'")))
    }
}

/// Protocol constants shared by all three routing policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpserParams {
    /// Holding time T of the delay bands.
    pub holding_time_s: f64,
    pub lqi_tl: u8,
    pub lqi_th: u8,
    pub cid_ttl: u16,
    pub cid_start_s: f64,
    /// Per-level deferral of the corona flood.
    pub epoch_s: f64,
    pub epoch_jitter_s: f64,
    pub cid_bytes: u32,
    pub t_prop_s: f64,
    pub t_proc_s: f64,
    pub seen_cache: u32,
    /// Use the fuzzy table's backoff bounds for candidates; when false every
    /// transmission uses the MAC defaults.
    pub priority_be: bool,
    /// Uniform holding window of the OppBcast baseline.
    pub oppbcast_window_s: f64,
}

impl Default for OpserParams {
    fn default() -> Self {
        OpserParams {
            holding_time_s: 0.005,
            lqi_tl: 85,
            lqi_th: 170,
            cid_ttl: 32,
            cid_start_s: 0.0,
            epoch_s: 0.05,
            epoch_jitter_s: 0.01,
            cid_bytes: 28,
            t_prop_s: 1e-6,
            t_proc_s: 1e-3,
            seen_cache: 256,
            priority_be: true,
            oppbcast_window_s: 0.005,
        }
    }
}

impl OpserParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.holding_time_s > 0.0) || SimTime::from_secs(self.holding_time_s) == SimTime::ZERO
        {
            return Err(invalid("holding_time_s must be at least 1 µs"));
        }
        if self.lqi_tl >= self.lqi_th {
            return Err(invalid("lqi_tl must be below lqi_th"));
        }
        if self.cid_ttl == 0 {
            return Err(invalid("cid_ttl must be at least 1"));
        }
        if !(self.epoch_s >= 0.0 && self.epoch_jitter_s >= 0.0 && self.cid_start_s >= 0.0) {
            return Err(invalid("CID timing must be non-negative"));
        }
        if self.cid_bytes == 0 || self.seen_cache == 0 {
            return Err(invalid("cid_bytes and seen_cache must be positive"));
        }
        if !(self.t_prop_s >= 0.0 && self.t_proc_s >= 0.0) {
            return Err(invalid("t_prop_s and t_proc_s must be non-negative"));
        }
        if !(self.oppbcast_window_s > 0.0) {
            return Err(invalid("oppbcast_window_s must be positive"));
        }
        Ok(())
    }

    pub fn holding_time(&self) -> SimTime {
        SimTime::from_secs(self.holding_time_s)
    }

    /// Passive-ACK wait: one full band past the lowest priority plus the
    /// frame's airtime.
    pub fn passive_ack_wait(&self, frame_airtime: SimTime) -> SimTime {
        self.holding_time().times(fuzzy::MAX_PRIORITY as u64) + frame_airtime
    }

    /// Minimum post-transmission sleep after a corona rebroadcast.
    pub fn min_cid_sleep(&self, frame_airtime: SimTime) -> SimTime {
        frame_airtime + SimTime::from_secs(2.0 * self.t_prop_s + self.t_proc_s)
    }
}
