//! Per-node routing state and the pure decision procedures of the hybrid
//! opportunistic/unicast protocol: corona-level learning, transmit mode
//! selection, candidate classification and trust bookkeeping.
//!
//! Nothing here touches the clock or the radio. The simulator calls these
//! functions and turns their verdicts into frames and timers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::fuzzy::{fuzzy_priority, lqi_normalize, trust_degree, FuzzyDecision, TrustDegree};
use super::neighbor::{NeighborEntry, NeighborTable, TrustEvent, TRUST_THRESHOLD};
use super::packet::{Address, CidHeader, DataHeader, NodeId, PacketKey};
use super::{DropReason, OpserParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteStatus {
    Active,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Opportunistic,
    Unicast(NodeId),
}

/// Why a send went out opportunistically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeReason {
    FirstPacket,
    Untrusted,
    RouteFailed,
    NoEligibleUnicast,
    TrustedNeighbor,
}

impl ModeReason {
    pub fn name(self) -> &'static str {
        match self {
            ModeReason::FirstPacket => "first",
            ModeReason::Untrusted => "untrusted",
            ModeReason::RouteFailed => "failed",
            ModeReason::NoEligibleUnicast => "no_eligible",
            ModeReason::TrustedNeighbor => "trusted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeChoice {
    pub mode: Mode,
    pub reason: ModeReason,
    /// Trust of the chosen unicast neighbour.
    pub trust: Option<f64>,
}

/// Bounded LRU set of recently handled packets.
#[derive(Debug, Clone)]
pub struct SeenCache {
    capacity: usize,
    tick: u64,
    stamp: HashMap<PacketKey, u64>,
    by_age: BTreeMap<u64, PacketKey>,
}

impl SeenCache {
    pub fn new(capacity: usize) -> Self {
        SeenCache {
            capacity: capacity.max(1),
            tick: 0,
            stamp: HashMap::new(),
            by_age: BTreeMap::new(),
        }
    }

    pub fn contains(&self, key: &PacketKey) -> bool {
        self.stamp.contains_key(key)
    }

    /// Marks `key` as most recently used. Returns true if it was not present.
    pub fn insert(&mut self, key: PacketKey) -> bool {
        self.tick += 1;
        let fresh = match self.stamp.insert(key, self.tick) {
            Some(old) => {
                self.by_age.remove(&old);
                false
            }
            None => true,
        };
        self.by_age.insert(self.tick, key);
        while self.stamp.len() > self.capacity {
            let (_, oldest) = self.by_age.pop_first().expect("non-empty");
            self.stamp.remove(&oldest);
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.stamp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamp.is_empty()
    }
}

/// Result of handing a corona interest packet to a node.
#[derive(Debug, Clone, PartialEq)]
pub enum CidOutcome {
    /// The sink ignores its own flood.
    AtSink,
    Duplicate,
    /// New round: level learnt; `rebroadcast` is None when the TTL expired.
    Learned {
        cl: u16,
        rebroadcast: Option<CidHeader>,
    },
}

/// What a node does with a broadcast data frame it decoded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecvDecision {
    Drop(DropReason),
    Deliver,
    Contend(FuzzyDecision),
}

#[derive(Debug, Clone)]
pub struct OpserNodeState {
    pub node_id: NodeId,
    pub is_sink: bool,
    pub sink_id: Option<NodeId>,
    pub corona_level: Option<u16>,
    pub route_status: RouteStatus,
    pub neighbor_table: NeighborTable,
    pub seen_cache: SeenCache,
    /// Locally originated packets so far.
    pub packet_counter: u32,
    /// Data sends (originated or forwarded) so far.
    pub sent_count: u32,
    pub mode: Mode,
    cid_rounds: BTreeSet<u32>,
    next_cid_seq: u32,
}

impl OpserNodeState {
    pub fn new(node_id: NodeId, is_sink: bool, seen_capacity: usize) -> Self {
        OpserNodeState {
            node_id,
            is_sink,
            sink_id: is_sink.then_some(node_id),
            corona_level: None,
            route_status: RouteStatus::Active,
            neighbor_table: NeighborTable::new(),
            seen_cache: SeenCache::new(seen_capacity),
            packet_counter: 0,
            sent_count: 0,
            mode: Mode::Opportunistic,
            cid_rounds: BTreeSet::new(),
            next_cid_seq: 1,
        }
    }

    /// Starts a new flood from the sink.
    pub fn cid_originate(&mut self, ttl: u16) -> Result<CidHeader> {
        if !self.is_sink {
            return Err(Error::Config(format!(
                "node {} is not the sink and cannot originate a corona flood",
                self.node_id
            )));
        }
        if ttl == 0 {
            return Err(Error::Config("CID TTL must be at least 1".into()));
        }
        self.corona_level = Some(1);
        let seq = self.next_cid_seq;
        self.next_cid_seq += 1;
        self.cid_rounds.insert(seq);
        Ok(CidHeader {
            cid_source_id: self.node_id,
            cid_seq_number: seq,
            cl: 1,
            prev_hop_id: self.node_id,
            next_hop_id: Address::Broadcast,
            cid_ttl: ttl,
        })
    }

    pub fn cid_receive(&mut self, h: &CidHeader, lqi: u8) -> CidOutcome {
        if self.is_sink {
            return CidOutcome::AtSink;
        }
        if !self.cid_rounds.insert(h.cid_seq_number) {
            return CidOutcome::Duplicate;
        }
        let cl = h.cl + 1;
        self.corona_level = Some(cl);
        self.sink_id = Some(h.cid_source_id);

        let known = self.neighbor_table.get(h.prev_hop_id).is_some();
        if self.neighbor_table.is_empty() || !known {
            self.route_status = RouteStatus::Active;
            let mut entry = NeighborEntry::new(h.prev_hop_id, h.cl, lqi, h.cid_source_id);
            entry.seq_num = h.cid_seq_number;
            entry.next_hop_id = h.next_hop_id;
            self.neighbor_table.insert(entry);
        } else if let Some(e) = self.neighbor_table.get_mut(h.prev_hop_id) {
            e.corona_level = h.cl;
            e.seq_num = h.cid_seq_number;
            e.record_lqi(lqi);
        }

        let rebroadcast = (h.cid_ttl > 1).then(|| CidHeader {
            cl,
            prev_hop_id: self.node_id,
            cid_ttl: h.cid_ttl - 1,
            ..*h
        });
        CidOutcome::Learned { cl, rebroadcast }
    }

    /// Transmit mode for the next data send.
    ///
    /// Opportunistic when this is the first packet, when no neighbour is
    /// trustworthy, or after a unicast failure. Otherwise unicast to the most
    /// trusted closer neighbour whose averaged LQI clears `lqi_tl`; if none
    /// clears the gate the send falls back to opportunistic.
    pub fn select_mode(&self, is_first: bool, lqi_tl: u8) -> ModeChoice {
        let opp = |reason| ModeChoice {
            mode: Mode::Opportunistic,
            reason,
            trust: None,
        };
        if is_first {
            return opp(ModeReason::FirstPacket);
        }
        if self.route_status == RouteStatus::Failed {
            return opp(ModeReason::RouteFailed);
        }
        match self.neighbor_table.max_trust() {
            Some(t) if t >= TRUST_THRESHOLD => {}
            _ => return opp(ModeReason::Untrusted),
        }
        let own_cl = self.corona_level.unwrap_or(u16::MAX);
        let best = self
            .neighbor_table
            .iter()
            .filter(|e| e.is_trustworthy() && e.corona_level < own_cl && e.lqi_avg >= lqi_tl as f64)
            .fold(None::<&NeighborEntry>, |best, e| match best {
                Some(b) if (b.trust_value, b.lqi_avg) >= (e.trust_value, e.lqi_avg) => Some(b),
                _ => Some(e),
            });
        match best {
            Some(e) => ModeChoice {
                mode: Mode::Unicast(e.forwarder_id),
                reason: ModeReason::TrustedNeighbor,
                trust: Some(e.trust_value),
            },
            None => opp(ModeReason::NoEligibleUnicast),
        }
    }

    pub fn trustworthy_count(&self) -> usize {
        match self.corona_level {
            Some(cl) => self.neighbor_table.trustworthy_count_below(cl),
            None => 0,
        }
    }

    /// Classifies a decoded broadcast data frame.
    pub fn classify_broadcast(
        &self,
        data: &DataHeader,
        lqi: u8,
        energy_ok: bool,
        params: &OpserParams,
    ) -> RecvDecision {
        if self.is_sink {
            return if data.destination_id == self.node_id {
                RecvDecision::Deliver
            } else {
                RecvDecision::Drop(DropReason::UnknownDestination)
            };
        }
        let Some(own_cl) = self.corona_level else {
            return RecvDecision::Drop(DropReason::NoCorona);
        };
        if own_cl > data.cl {
            return RecvDecision::Drop(DropReason::Upstream);
        }
        if self.seen_cache.contains(&data.key()) {
            return RecvDecision::Drop(DropReason::Duplicate);
        }
        if Some(data.destination_id) != self.sink_id {
            return RecvDecision::Drop(DropReason::UnknownDestination);
        }
        if !energy_ok {
            return RecvDecision::Drop(DropReason::Energy);
        }
        let deg = trust_degree(self.trustworthy_count());
        if deg == TrustDegree::Ineligible {
            return RecvDecision::Drop(DropReason::Ineligible);
        }
        let level = lqi_normalize(lqi, params.lqi_tl, params.lqi_th);
        RecvDecision::Contend(fuzzy_priority(level, deg, own_cl == data.cl))
    }

    /// Credits a forwarder overheard relaying one of our packets.
    ///
    /// Unknown forwarders join at 0.5; a forwarder penalised below the
    /// threshold is reset to 0.5; otherwise its trust grows by 10%.
    /// Returns the old trust (None if new), the new trust and the event.
    pub fn on_passive_ack(
        &mut self,
        forwarder: NodeId,
        forwarder_cl: u16,
        lqi: u8,
    ) -> (Option<f64>, f64, Option<TrustEvent>) {
        self.route_status = RouteStatus::Active;
        let dest = self.sink_id.unwrap_or(forwarder);
        match self.neighbor_table.get_mut(forwarder) {
            None => {
                let e = NeighborEntry::new(forwarder, forwarder_cl, lqi, dest);
                let tv = e.trust_value;
                self.neighbor_table.insert(e);
                (None, tv, None)
            }
            Some(e) => {
                e.record_lqi(lqi);
                e.corona_level = forwarder_cl;
                let event = if e.trust_value < TRUST_THRESHOLD {
                    TrustEvent::OpportunisticWinReset
                } else {
                    TrustEvent::Success
                };
                let old = e.trust_value;
                e.trust_value = super::neighbor::trust_update(old, event);
                (Some(old), e.trust_value, Some(event))
            }
        }
    }

    /// Applies the outcome of a unicast exchange with `next_hop`.
    pub fn on_unicast_result(
        &mut self,
        next_hop: NodeId,
        acked: bool,
        ack_lqi: Option<u8>,
    ) -> Option<(f64, f64)> {
        let event = if acked {
            TrustEvent::Success
        } else {
            self.route_status = RouteStatus::Failed;
            TrustEvent::Failure
        };
        if let (Some(lqi), Some(e)) = (ack_lqi, self.neighbor_table.get_mut(next_hop)) {
            e.record_lqi(lqi);
        }
        self.neighbor_table.apply(next_hop, event)
    }
}
