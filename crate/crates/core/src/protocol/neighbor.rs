use std::collections::BTreeMap;

use super::packet::{Address, NodeId};

pub const TRUST_INITIAL: f64 = 0.5;
pub const TRUST_MAX: f64 = 1.0;
pub const TRUST_MIN: f64 = 0.0;
/// Entries at or above this are trustworthy.
pub const TRUST_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrustEvent {
    Success,
    Failure,
    OpportunisticWinReset,
}

impl TrustEvent {
    pub fn name(self) -> &'static str {
        match self {
            TrustEvent::Success => "success",
            TrustEvent::Failure => "failure",
            TrustEvent::OpportunisticWinReset => "reset",
        }
    }
}

/// +10% multiplicative on success (capped at 1), -50% on failure, back to
/// 0.5 when a penalised forwarder wins an opportunistic round.
pub fn trust_update(tv: f64, event: TrustEvent) -> f64 {
    debug_assert!((TRUST_MIN..=TRUST_MAX).contains(&tv));
    match event {
        TrustEvent::Success => (tv + 0.10 * tv).min(TRUST_MAX),
        TrustEvent::Failure => (tv - 0.50 * tv).max(TRUST_MIN),
        TrustEvent::OpportunisticWinReset => TRUST_INITIAL,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub forwarder_id: NodeId,
    pub trust_value: f64,
    /// Arithmetic running mean of reverse-link LQI samples.
    pub lqi_avg: f64,
    pub lqi_samples: u32,
    pub corona_level: u16,
    pub destination_id: NodeId,
    pub seq_num: u32,
    pub next_hop_id: Address,
}

impl NeighborEntry {
    pub fn new(forwarder_id: NodeId, corona_level: u16, lqi: u8, destination_id: NodeId) -> Self {
        NeighborEntry {
            forwarder_id,
            trust_value: TRUST_INITIAL,
            lqi_avg: lqi as f64,
            lqi_samples: 1,
            corona_level,
            destination_id,
            seq_num: 0,
            next_hop_id: Address::Broadcast,
        }
    }

    pub fn record_lqi(&mut self, lqi: u8) {
        self.lqi_samples += 1;
        self.lqi_avg += (lqi as f64 - self.lqi_avg) / self.lqi_samples as f64;
    }

    pub fn is_trustworthy(&self) -> bool {
        self.trust_value >= TRUST_THRESHOLD
    }
}

/// Neighbour table keyed by forwarder id. Ordered so that iteration, and
/// hence every tie-break, is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborTable {
    entries: BTreeMap<NodeId, NeighborEntry>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: NodeId) -> Option<&NeighborEntry> {
        self.entries.get(&id)
    }

    pub fn get_mut(&mut self, id: NodeId) -> Option<&mut NeighborEntry> {
        self.entries.get_mut(&id)
    }

    pub fn insert(&mut self, entry: NeighborEntry) {
        self.entries.insert(entry.forwarder_id, entry);
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborEntry> {
        self.entries.values()
    }

    pub fn max_trust(&self) -> Option<f64> {
        self.entries
            .values()
            .map(|e| e.trust_value)
            .reduce(f64::max)
    }

    /// Trustworthy entries strictly closer to the sink than `own_cl`.
    pub fn trustworthy_count_below(&self, own_cl: u16) -> usize {
        self.entries
            .values()
            .filter(|e| e.is_trustworthy() && e.corona_level < own_cl)
            .count()
    }

    /// Applies a trust event to an existing entry; returns (old, new).
    pub fn apply(&mut self, id: NodeId, event: TrustEvent) -> Option<(f64, f64)> {
        let e = self.entries.get_mut(&id)?;
        let old = e.trust_value;
        e.trust_value = trust_update(old, event);
        Some((old, e.trust_value))
    }
}
