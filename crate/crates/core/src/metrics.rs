//! Run-level metrics: delivery ratio, end-to-end delay, network energy and
//! the duplicate/CAF/drop counters.
//!
//! The simulator feeds its trace records into [`MetricsCollector`], so
//! replaying a persisted trace through the same collector reproduces the
//! in-run record exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::energy::fj_to_joules;
use crate::engine::SimTime;
use crate::protocol::{NodeId, PacketKey, PacketKind};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub sent_by_sources: u64,
    /// Unique packets delivered to the sink.
    pub received_at_sink: u64,
    /// One entry per unique delivery, first copy only, in delivery order.
    pub per_packet_delay_s: Vec<f64>,
    pub tec_fj: u64,
    pub tec_j: f64,
    pub n_nodes: u64,
    pub duplicates_at_sink: u64,
    pub caf_count: u64,
    pub drops_by_reason: BTreeMap<String, u64>,
    /// Data frames put on the air, retries included.
    pub data_transmissions: u64,
    /// Extra forwarders per contention round: for every packet and every
    /// triggering transmitter, the number of distinct nodes that forwarded
    /// in response minus one.
    pub duplicate_transmissions: u64,
    /// Network-wide energy per radio state (tx, rx, idle, sleep), fJ.
    pub per_state_fj: [u64; 4],
}

impl MetricsRecord {
    /// Unique deliveries over packets generated; `None` when nothing was sent.
    pub fn pdr(&self) -> Option<f64> {
        (self.sent_by_sources > 0)
            .then(|| self.received_at_sink as f64 / self.sent_by_sources as f64)
    }

    pub fn avg_e2e_delay(&self) -> Option<f64> {
        if self.per_packet_delay_s.is_empty() {
            return None;
        }
        Some(self.per_packet_delay_s.iter().sum::<f64>() / self.per_packet_delay_s.len() as f64)
    }

    /// Average energy per node and energy per delivered packet.
    pub fn energy_metrics(&self) -> (Option<f64>, Option<f64>) {
        let avg = (self.n_nodes > 0).then(|| self.tec_j / self.n_nodes as f64);
        let nec = (self.received_at_sink > 0).then(|| self.tec_j / self.received_at_sink as f64);
        (avg, nec)
    }

    pub fn drops(&self, reason: &str) -> u64 {
        self.drops_by_reason.get(reason).copied().unwrap_or(0)
    }
}

/// Incremental builder of a [`MetricsRecord`] from trace records.
#[derive(Debug, Default)]
pub struct MetricsCollector {
    record: MetricsRecord,
    generated: HashMap<PacketKey, SimTime>,
    delivered: BTreeSet<PacketKey>,
    forwarders: BTreeMap<(PacketKey, NodeId), BTreeSet<NodeId>>,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, rec: &TraceRecord) {
        let r = &mut self.record;
        match rec {
            TraceRecord::Gen { t, node, pid } => {
                r.sent_by_sources += 1;
                self.generated.insert(
                    PacketKey {
                        source: *node,
                        packet_id: *pid,
                    },
                    *t,
                );
            }
            TraceRecord::Deliver { t, key, .. } => {
                if self.delivered.insert(*key) {
                    r.received_at_sink += 1;
                    let gen = self.generated.get(key).copied().unwrap_or(*t);
                    r.per_packet_delay_s.push(t.saturating_sub(gen).as_secs());
                } else {
                    r.duplicates_at_sink += 1;
                }
            }
            TraceRecord::Tx {
                node,
                kind: PacketKind::Data,
                key,
                trig,
                retry,
                ..
            } => {
                r.data_transmissions += 1;
                if let (Some(k), Some(tr), 0) = (key, trig, retry) {
                    self.forwarders.entry((*k, *tr)).or_default().insert(*node);
                }
            }
            TraceRecord::Caf { .. } => r.caf_count += 1,
            TraceRecord::Drop { reason, .. } => {
                *r.drops_by_reason
                    .entry(reason.name().to_string())
                    .or_default() += 1;
            }
            TraceRecord::Energy {
                initial,
                remaining,
                per_state,
                ..
            } => {
                r.n_nodes += 1;
                r.tec_fj += initial - remaining;
                for (acc, v) in r.per_state_fj.iter_mut().zip(per_state) {
                    *acc += v;
                }
            }
            _ => {}
        }
    }

    pub fn finish(mut self) -> MetricsRecord {
        self.record.duplicate_transmissions =
            self.forwarders.values().map(|s| s.len() as u64 - 1).sum();
        self.record.tec_j = fj_to_joules(self.record.tec_fj);
        self.record
    }
}

pub fn metrics_from_trace(records: &[TraceRecord]) -> MetricsRecord {
    let mut c = MetricsCollector::new();
    for r in records {
        c.observe(r);
    }
    c.finish()
}
