//! Decision logic of the two comparison protocols: plain opportunistic
//! broadcast with random holding timers, and corona-greedy unicast along
//! the best-LQI closer neighbour.

use crate::engine::{RngStream, SimTime};
use crate::error::{invalid, Result};
use crate::protocol::{DataHeader, DropReason, NodeId, OpserNodeState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OppBcastConfig {
    pub contention_window_s: f64,
}

impl Default for OppBcastConfig {
    fn default() -> Self {
        OppBcastConfig {
            contention_window_s: 0.005,
        }
    }
}

impl OppBcastConfig {
    pub fn new(contention_window_s: f64) -> Result<Self> {
        let c = OppBcastConfig {
            contention_window_s,
        };
        if !(contention_window_s > 0.0) || SimTime::from_secs(contention_window_s) == SimTime::ZERO
        {
            return Err(invalid("contention window must be at least 1 µs"));
        }
        Ok(c)
    }

    pub fn window(&self) -> SimTime {
        SimTime::from_secs(self.contention_window_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OppBcastAction {
    Drop(DropReason),
    Deliver,
    /// Rebroadcast after this holding delay unless suppressed.
    Hold(SimTime),
}

/// Reception rule of the broadcast baseline: every not-upstream node with
/// enough energy rebroadcasts after a uniform delay in `[0, window)`.
pub fn oppbcast_recv(
    state: &OpserNodeState,
    data: &DataHeader,
    energy_ok: bool,
    cfg: &OppBcastConfig,
    rng: &mut RngStream,
) -> OppBcastAction {
    if state.is_sink {
        return if data.destination_id == state.node_id {
            OppBcastAction::Deliver
        } else {
            OppBcastAction::Drop(DropReason::UnknownDestination)
        };
    }
    let Some(cl) = state.corona_level else {
        return OppBcastAction::Drop(DropReason::NoCorona);
    };
    if cl > data.cl {
        return OppBcastAction::Drop(DropReason::Upstream);
    }
    if state.seen_cache.contains(&data.key()) {
        return OppBcastAction::Drop(DropReason::Duplicate);
    }
    if Some(data.destination_id) != state.sink_id {
        return OppBcastAction::Drop(DropReason::UnknownDestination);
    }
    if !energy_ok {
        return OppBcastAction::Drop(DropReason::Energy);
    }
    let w = cfg.window().as_micros();
    OppBcastAction::Hold(SimTime::from_micros(rng.uniform_int(0, w - 1)))
}

/// Closer neighbour with the best averaged LQI; ties go to the lowest id.
pub fn greedy_unicast_next_hop(state: &OpserNodeState) -> Option<NodeId> {
    let own = state.corona_level?;
    state
        .neighbor_table
        .iter()
        .filter(|e| e.corona_level < own)
        .fold(None::<(NodeId, f64)>, |best, e| match best {
            Some((_, l)) if l >= e.lqi_avg => best,
            _ => Some((e.forwarder_id, e.lqi_avg)),
        })
        .map(|(id, _)| id)
}
