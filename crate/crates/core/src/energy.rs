//! Per-node radio energy accounting.
//!
//! Charges are applied lazily on state transitions. Internally every
//! amount is an integer number of femtojoules, so the conservation identity
//! `initial - remaining == sum(per-state)` holds exactly and network totals
//! are order-independent.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::{invalid, Result};

pub const FJ_PER_J: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RadioState {
    Tx,
    Rx,
    Idle,
    Sleep,
}

impl RadioState {
    pub const ALL: [RadioState; 4] = [
        RadioState::Tx,
        RadioState::Rx,
        RadioState::Idle,
        RadioState::Sleep,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RadioState::Tx => "tx",
            RadioState::Rx => "rx",
            RadioState::Idle => "idle",
            RadioState::Sleep => "sleep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerProfile {
    pub e_initial_j: f64,
    pub p_tx_w: f64,
    pub p_rx_w: f64,
    pub p_idle_w: f64,
    pub p_sleep_w: f64,
    /// Nodes below this remaining energy stop forwarding.
    pub e_min_j: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        PowerProfile {
            e_initial_j: 3.6,
            p_tx_w: 0.02955,
            p_rx_w: 0.0255,
            p_idle_w: 0.0255,
            p_sleep_w: 3e-6,
            e_min_j: 0.18,
        }
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p_tx_w, self.p_rx_w, self.p_idle_w, self.p_sleep_w];
        if all.iter().any(|p| !(*p >= 0.0)) {
            return Err(invalid("power draws must be non-negative"));
        }
        if !(self.p_sleep_w < self.p_idle_w && self.p_idle_w <= self.p_rx_w) {
            return Err(invalid("power profile requires p_sleep < p_idle <= p_rx"));
        }
        if !(self.e_initial_j > 0.0 && self.e_min_j >= 0.0) {
            return Err(invalid(
                "initial energy must be positive and e_min non-negative",
            ));
        }
        if self.e_initial_j * FJ_PER_J > u64::MAX as f64 {
            return Err(invalid("initial energy too large"));
        }
        Ok(())
    }

    pub fn power_w(&self, state: RadioState) -> f64 {
        match state {
            RadioState::Tx => self.p_tx_w,
            RadioState::Rx => self.p_rx_w,
            RadioState::Idle => self.p_idle_w,
            RadioState::Sleep => self.p_sleep_w,
        }
    }
}

pub fn joules_to_fj(j: f64) -> u64 {
    (j * FJ_PER_J).round() as u64
}

pub fn fj_to_joules(fj: u64) -> f64 {
    fj as f64 / FJ_PER_J
}

/// Energy drawn in `state` over `duration`, rounded to the nearest fJ.
pub fn charge_fj(profile: &PowerProfile, state: RadioState, duration: SimTime) -> u64 {
    // 1 W for 1 µs is 1e9 fJ.
    (duration.as_micros() as f64 * profile.power_w(state) * 1e9).round() as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyAccount {
    initial_fj: u64,
    remaining_fj: u64,
    per_state_fj: [u64; 4],
    state: RadioState,
    state_entry: SimTime,
    dead: bool,
}

impl EnergyAccount {
    pub fn new(profile: &PowerProfile, start: SimTime) -> Self {
        let initial = joules_to_fj(profile.e_initial_j);
        EnergyAccount {
            initial_fj: initial,
            remaining_fj: initial,
            per_state_fj: [0; 4],
            state: RadioState::Idle,
            state_entry: start,
            dead: false,
        }
    }

    /// Rebuilds an account from persisted totals (trace replay).
    pub fn from_parts(initial_fj: u64, remaining_fj: u64, per_state_fj: [u64; 4]) -> Self {
        EnergyAccount {
            initial_fj,
            remaining_fj,
            per_state_fj,
            state: RadioState::Idle,
            state_entry: SimTime::ZERO,
            dead: remaining_fj == 0,
        }
    }

    /// Charges the time spent in the current state and enters `new_state`.
    /// Returns the charge applied in fJ. Charges are floored at the remaining
    /// budget; a node that reaches zero is marked dead.
    pub fn transition(
        &mut self,
        profile: &PowerProfile,
        new_state: RadioState,
        now: SimTime,
    ) -> u64 {
        let charged = self.settle(profile, now);
        if !self.dead {
            self.state = new_state;
        }
        charged
    }

    /// Charges up to `now` without changing state.
    pub fn settle(&mut self, profile: &PowerProfile, now: SimTime) -> u64 {
        debug_assert!(now >= self.state_entry, "energy charged backwards in time");
        if self.dead {
            self.state_entry = now;
            return 0;
        }
        let elapsed = now.saturating_sub(self.state_entry);
        let charge = charge_fj(profile, self.state, elapsed).min(self.remaining_fj);
        self.per_state_fj[self.state.index()] += charge;
        self.remaining_fj -= charge;
        self.state_entry = now;
        if self.remaining_fj == 0 {
            self.dead = true;
        }
        charge
    }

    pub fn state(&self) -> RadioState {
        self.state
    }

    pub fn state_entry_time(&self) -> SimTime {
        self.state_entry
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    pub fn initial_fj(&self) -> u64 {
        self.initial_fj
    }

    pub fn remaining_fj(&self) -> u64 {
        self.remaining_fj
    }

    pub fn consumed_fj(&self) -> u64 {
        self.initial_fj - self.remaining_fj
    }

    pub fn per_state_fj(&self) -> [u64; 4] {
        self.per_state_fj
    }

    pub fn state_fj(&self, state: RadioState) -> u64 {
        self.per_state_fj[state.index()]
    }

    pub fn e_initial_j(&self) -> f64 {
        fj_to_joules(self.initial_fj)
    }

    pub fn e_rem_j(&self) -> f64 {
        fj_to_joules(self.remaining_fj)
    }

    pub fn per_state_j(&self, state: RadioState) -> f64 {
        fj_to_joules(self.state_fj(state))
    }

    /// Sum of the per-state buckets; equals `consumed_fj` by construction.
    pub fn per_state_total_fj(&self) -> u64 {
        self.per_state_fj.iter().sum()
    }
}

/// True iff remaining energy is at least the operating threshold.
pub fn is_eligible(account: &EnergyAccount, profile: &PowerProfile) -> bool {
    account.remaining_fj() >= joules_to_fj(profile.e_min_j)
}
