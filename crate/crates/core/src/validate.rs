//! Offline invariant checks over a recorded trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::engine::SimTime;
use crate::metrics::{metrics_from_trace, MetricsRecord};
use crate::protocol::{Mode, NodeId, PacketKey, PacketKind, TRUST_THRESHOLD};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    /// Holding time T of the delay bands.
    pub hold_t: SimTime,
    /// Contention window of the OppBcast baseline (priority 0 records).
    pub oppbcast_window: SimTime,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            hold_t: SimTime::from_micros(5_000),
            oppbcast_window: SimTime::from_micros(5_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index of the offending record.
    pub index: usize,
    pub check: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "record {}: [{}] {}",
            self.index, self.check, self.message
        )
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub records: usize,
    pub violations: Vec<Violation>,
    pub metrics: MetricsRecord,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs every check and recomputes the run metrics from the records.
///
/// Checks: time never decreases; each node sends each flood sequence at
/// most once; holding delays lie in their priority band and order
/// candidates of one frame by priority; unicast is only chosen towards a
/// trusted neighbour and a route failure is followed by an opportunistic
/// resend; a forwarded frame never carries a higher corona level than the
/// frame that triggered it; every energy account balances.
pub fn validate_trace(records: &[TraceRecord], opts: &ValidateOptions) -> ValidationReport {
    let mut v = Vec::new();
    let mut bad = |index: usize, check: &'static str, message: String| {
        v.push(Violation {
            index,
            check,
            message,
        });
    };

    let mut last_t = SimTime::ZERO;
    let mut cid_sent: BTreeSet<(NodeId, u32)> = BTreeSet::new();
    let mut dhd_by_frame: BTreeMap<u64, Vec<(u8, SimTime, usize)>> = BTreeMap::new();
    let mut awaiting_opp: BTreeMap<NodeId, SimTime> = BTreeMap::new();
    let mut tx_cl: BTreeMap<(PacketKey, NodeId), u16> = BTreeMap::new();

    for (i, rec) in records.iter().enumerate() {
        let t = rec.time();
        if t < last_t {
            bad(
                i,
                "time",
                format!("time {} precedes {}", t.as_micros(), last_t.as_micros()),
            );
        }
        last_t = last_t.max(t);
        match rec {
            TraceRecord::Tx {
                node,
                kind: PacketKind::Cid,
                seq: Some(seq),
                ..
            } => {
                if !cid_sent.insert((*node, *seq)) {
                    bad(
                        i,
                        "cid_once",
                        format!("node {} sent flood seq {seq} twice", node.0),
                    );
                }
            }
            TraceRecord::Tx {
                node,
                kind: PacketKind::Data,
                key: Some(key),
                cl,
                trig,
                ..
            } => {
                if let Some(u) = trig {
                    if let Some(&ucl) = tx_cl.get(&(*key, *u)) {
                        if *cl > ucl {
                            bad(
                                i,
                                "corona",
                                format!(
                                    "node {} forwarded at level {cl} after node {} sent at {ucl}",
                                    node.0, u.0
                                ),
                            );
                        }
                    }
                }
                tx_cl.insert((*key, *node), *cl);
            }
            TraceRecord::Dhd {
                t,
                prio,
                fire,
                frame,
                ..
            } => {
                let delay = *fire - *t;
                let (lo, hi) = match *prio {
                    0 => (SimTime::ZERO, opts.oppbcast_window),
                    p => (opts.hold_t.times(p as u64 - 1), opts.hold_t.times(p as u64)),
                };
                if delay < lo || delay >= hi {
                    bad(
                        i,
                        "dhd_band",
                        format!(
                            "priority {prio} delay {} us outside [{}, {})",
                            delay.as_micros(),
                            lo.as_micros(),
                            hi.as_micros()
                        ),
                    );
                }
                dhd_by_frame
                    .entry(*frame)
                    .or_default()
                    .push((*prio, delay, i));
            }
            TraceRecord::Mode {
                node, mode, trust, ..
            } => {
                if let Some(failed_at) = awaiting_opp.remove(node) {
                    if failed_at != t || *mode != Mode::Opportunistic {
                        bad(
                            i,
                            "mode",
                            format!(
                                "node {} did not resend opportunistically after a route failure",
                                node.0
                            ),
                        );
                    }
                }
                if let Mode::Unicast(nh) = mode {
                    if !trust.is_some_and(|tv| tv >= TRUST_THRESHOLD) {
                        bad(
                            i,
                            "mode",
                            format!(
                                "node {} chose untrusted next hop {} ({trust:?})",
                                node.0, nh.0
                            ),
                        );
                    }
                }
            }
            TraceRecord::RouteFail { node, .. } => {
                // The failed packet is resent at once, so the node's next
                // mode decision carries the same timestamp.
                awaiting_opp.insert(*node, t);
            }
            TraceRecord::Energy {
                node,
                initial,
                remaining,
                per_state,
                ..
            } => {
                let spent: u64 = per_state.iter().sum();
                if initial.checked_sub(*remaining) != Some(spent) {
                    bad(
                        i,
                        "energy",
                        format!("node {}: initial {initial} - remaining {remaining} != spent {spent} fJ", node.0),
                    );
                }
            }
            _ => {}
        }
    }

    for (node, _) in awaiting_opp {
        bad(
            records.len(),
            "mode",
            format!("node {} never resent after its last route failure", node.0),
        );
    }

    for cands in dhd_by_frame.values() {
        for a in cands {
            for b in cands {
                if a.0 >= 1 && a.0 < b.0 && a.1 >= b.1 {
                    bad(
                        b.2,
                        "dhd_order",
                        format!("priority {} fired no later than priority {}", a.0, b.0),
                    );
                }
            }
        }
    }

    ValidationReport {
        records: records.len(),
        violations: v,
        metrics: metrics_from_trace(records),
    }
}
