use std::collections::{BTreeMap, VecDeque};

use crate::energy::{EnergyAccount, RadioState};
use crate::engine::{EventHandle, Purpose, RngStream, SimTime};
use crate::mac::{BeBounds, CsmaProcess};
use crate::protocol::{CidHeader, DataHeader, NodeId, OpserNodeState, Packet, PacketKey};

/// A frame being received.
#[derive(Debug, Clone)]
pub(crate) struct Arrival {
    pub frame: u64,
    pub rssi_dbm: f64,
    pub power_mw: f64,
    /// Summed power of every other frame that overlapped this one.
    pub interference_mw: f64,
    /// Lost to half-duplex: the node started transmitting mid-frame.
    pub corrupted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum JobKind {
    Cid,
    /// Broadcast data; `passive` arms the passive-ACK wait after sending.
    Bcast {
        passive: bool,
    },
    Unicast {
        next_hop: NodeId,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct MacJob {
    pub packet: Packet,
    pub bounds: BeBounds,
    pub kind: JobKind,
    /// Transmitter that made this node a forwarder; None for own packets.
    pub trig: Option<NodeId>,
    /// Passive-ACK retry index of this broadcast.
    pub retry: u32,
}

impl MacJob {
    pub fn key(&self) -> Option<PacketKey> {
        match self.kind {
            JobKind::Cid => None,
            _ => self.packet.key(),
        }
    }

    pub fn data(&self) -> Option<DataHeader> {
        self.packet.data().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    Backoff,
    Cca,
    /// Clear channel found; switching the radio to transmit.
    Turnaround,
    Tx,
    AwaitAck,
}

#[derive(Debug)]
pub(crate) struct Active {
    pub job: MacJob,
    pub csma: CsmaProcess,
    pub phase: Phase,
    pub timer: Option<EventHandle>,
    /// Unicast attempts already made (not counting the current one).
    pub tries: u32,
    pub frame: Option<u64>,
}

/// Holding timer armed as a forwarding candidate.
#[derive(Debug, Clone)]
pub(crate) struct PendingFwd {
    pub handle: EventHandle,
    pub trig: NodeId,
    pub header: DataHeader,
    pub bounds: BeBounds,
}

/// Sent broadcast waiting to be overheard downstream.
#[derive(Debug, Clone)]
pub(crate) struct PackWait {
    pub handle: EventHandle,
    pub attempt: u32,
    pub header: DataHeader,
    pub bounds: BeBounds,
    pub trig: Option<NodeId>,
}

pub(crate) struct Node {
    pub id: NodeId,
    pub proto: OpserNodeState,
    pub energy: EnergyAccount,
    /// Protocol sleep: radio off and MAC paused.
    pub asleep: bool,
    /// Receiver off during a corona-flood backoff.
    pub rx_off: bool,
    pub transmitting: Option<u64>,
    pub arrivals: Vec<Arrival>,
    pub in_cca: bool,
    pub cca_busy: bool,
    pub queue: VecDeque<MacJob>,
    pub active: Option<Active>,
    pub pending_fwd: BTreeMap<PacketKey, PendingFwd>,
    pub pack: BTreeMap<PacketKey, PackWait>,
    pub cid_pending: Option<CidHeader>,
    pub cid_sent: u32,
    pub next_pid: u32,
    pub rx_us: u64,
    pub rx_since: Option<SimTime>,
    pub rng_channel: RngStream,
    pub rng_backoff: RngStream,
    pub rng_jitter: RngStream,
    pub rng_traffic: RngStream,
    pub rng_error: RngStream,
}

impl Node {
    pub fn new(id: NodeId, proto: OpserNodeState, energy: EnergyAccount, seed: u64) -> Self {
        let s = |p| RngStream::for_node(seed, id.0 as u32, p);
        Node {
            id,
            proto,
            energy,
            asleep: false,
            rx_off: false,
            transmitting: None,
            arrivals: Vec::new(),
            in_cca: false,
            cca_busy: false,
            queue: VecDeque::new(),
            active: None,
            pending_fwd: BTreeMap::new(),
            pack: BTreeMap::new(),
            cid_pending: None,
            cid_sent: 0,
            next_pid: 1,
            rx_us: 0,
            rx_since: None,
            rng_channel: s(Purpose::Channel),
            rng_backoff: s(Purpose::Backoff),
            rng_jitter: s(Purpose::Jitter),
            rng_traffic: s(Purpose::Traffic),
            rng_error: s(Purpose::ErrorModel),
        }
    }

    pub fn desired_radio(&self) -> RadioState {
        if self.transmitting.is_some() {
            RadioState::Tx
        } else if self.asleep || self.rx_off {
            RadioState::Sleep
        } else if !self.arrivals.is_empty() {
            RadioState::Rx
        } else {
            RadioState::Idle
        }
    }

    pub fn listening(&self) -> bool {
        !self.asleep && !self.rx_off && self.transmitting.is_none() && !self.energy.is_dead()
    }
}
