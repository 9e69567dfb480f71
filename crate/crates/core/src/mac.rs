//! Unslotted IEEE 802.15.4 CSMA/CA with caller-chosen backoff-exponent
//! bounds, plus the unicast ACK/retry loop and frame airtime.
//!
//! [`CsmaProcess`] is the state machine shared by the event-driven
//! simulator and the closed-loop [`csma_transmit`] helper used in tests and
//! from Python.

use serde::{Deserialize, Serialize};

use crate::engine::{RngStream, SimTime};
use crate::error::{invalid, Result};

/// aUnitBackoffPeriod in symbols.
pub const UNIT_BACKOFF_SYMBOLS: u32 = 20;
/// CCA detection time in symbols.
pub const CCA_SYMBOLS: u32 = 8;
/// RX-to-TX turnaround in symbols.
pub const TURNAROUND_SYMBOLS: u32 = 12;
/// macAckWaitDuration in symbols.
pub const ACK_WAIT_SYMBOLS: u32 = 54;
pub const ACK_FRAME_BYTES: u32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeBounds {
    pub min: u8,
    pub max: u8,
}

impl BeBounds {
    pub fn new(min: u8, max: u8) -> Result<Self> {
        if min > max {
            return Err(invalid(format!("macMinBE {min} exceeds macMaxBE {max}")));
        }
        if max > 20 {
            return Err(invalid(format!("macMaxBE {max} is unreasonably large")));
        }
        Ok(BeBounds { min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsmaConfig {
    pub mac_min_be: u8,
    pub mac_max_be: u8,
    pub max_csma_backoffs: u8,
    pub mac_retries: u8,
    pub backoff_unit_s: f64,
    pub symbol_rate: f64,
    pub data_rate_bps: f64,
    pub cca_s: f64,
    pub turnaround_s: f64,
    pub ack_timeout_s: f64,
    pub ack_bytes: u32,
    /// Frames waiting for the radio beyond this are dropped.
    pub queue_capacity: u32,
}

impl Default for CsmaConfig {
    fn default() -> Self {
        let symbol_rate = 62_500.0;
        CsmaConfig {
            mac_min_be: 3,
            mac_max_be: 5,
            max_csma_backoffs: 7,
            mac_retries: 3,
            backoff_unit_s: UNIT_BACKOFF_SYMBOLS as f64 / symbol_rate,
            symbol_rate,
            data_rate_bps: 250_000.0,
            cca_s: CCA_SYMBOLS as f64 / symbol_rate,
            turnaround_s: TURNAROUND_SYMBOLS as f64 / symbol_rate,
            ack_timeout_s: ACK_WAIT_SYMBOLS as f64 / symbol_rate,
            ack_bytes: ACK_FRAME_BYTES,
            queue_capacity: 32,
        }
    }
}

impl CsmaConfig {
    pub fn validate(&self) -> Result<()> {
        self.default_bounds()?;
        if !(self.backoff_unit_s > 0.0) {
            return Err(invalid("backoff_unit_s must be positive"));
        }
        if !(self.data_rate_bps > 0.0 && self.symbol_rate > 0.0) {
            return Err(invalid("data and symbol rates must be positive"));
        }
        if !(self.cca_s >= 0.0 && self.turnaround_s >= 0.0 && self.ack_timeout_s > 0.0) {
            return Err(invalid("MAC timing constants must be non-negative"));
        }
        Ok(())
    }

    pub fn default_bounds(&self) -> Result<BeBounds> {
        BeBounds::new(self.mac_min_be, self.mac_max_be)
    }

    pub fn with_bounds(&self, bounds: BeBounds) -> CsmaConfig {
        CsmaConfig {
            mac_min_be: bounds.min,
            mac_max_be: bounds.max,
            ..self.clone()
        }
    }

    pub fn backoff_unit(&self) -> SimTime {
        SimTime::from_secs(self.backoff_unit_s)
    }
}

/// Seconds on air for a frame of `frame_bytes`.
pub fn airtime(frame_bytes: u32, data_rate_bps: f64) -> Result<f64> {
    if frame_bytes == 0 {
        return Err(invalid("frame must have at least one byte"));
    }
    if !(data_rate_bps > 0.0) {
        return Err(invalid("data rate must be positive"));
    }
    Ok(8.0 * frame_bytes as f64 / data_rate_bps)
}

pub fn airtime_of(frame_bytes: u32, data_rate_bps: f64) -> Result<SimTime> {
    airtime(frame_bytes, data_rate_bps).map(SimTime::from_secs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Sent,
    ChannelAccessFailure,
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxAttemptResult {
    pub outcome: TxOutcome,
    pub total_backoff_s: f64,
    pub cca_attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcaVerdict {
    Transmit,
    BackoffAgain,
    ChannelAccessFailure,
}

/// NB/BE bookkeeping for one channel-access attempt.
#[derive(Debug, Clone)]
pub struct CsmaProcess {
    bounds: BeBounds,
    max_backoffs: u8,
    nb: u8,
    be: u8,
    cca_attempts: u32,
    total_backoff_units: u64,
}

impl CsmaProcess {
    pub fn new(bounds: BeBounds, max_backoffs: u8) -> Self {
        CsmaProcess {
            bounds,
            max_backoffs,
            nb: 0,
            be: bounds.min,
            cca_attempts: 0,
            total_backoff_units: 0,
        }
    }

    pub fn be(&self) -> u8 {
        self.be
    }

    pub fn nb(&self) -> u8 {
        self.nb
    }

    pub fn bounds(&self) -> BeBounds {
        self.bounds
    }

    pub fn cca_attempts(&self) -> u32 {
        self.cca_attempts
    }

    pub fn total_backoff_units(&self) -> u64 {
        self.total_backoff_units
    }

    /// Random backoff in unit periods, uniform over `0..=2^BE - 1`.
    pub fn draw_backoff(&mut self, rng: &mut RngStream) -> u32 {
        let hi = (1u64 << self.be) - 1;
        let units = rng.uniform_int(0, hi) as u32;
        self.total_backoff_units += units as u64;
        units
    }

    pub fn on_cca(&mut self, busy: bool) -> CcaVerdict {
        self.cca_attempts += 1;
        if !busy {
            return CcaVerdict::Transmit;
        }
        self.nb += 1;
        self.be = (self.be + 1).min(self.bounds.max);
        if self.nb > self.max_backoffs {
            CcaVerdict::ChannelAccessFailure
        } else {
            CcaVerdict::BackoffAgain
        }
    }
}

/// Runs one full CSMA/CA attempt against a channel probe.
///
/// `channel_busy(i)` answers the i-th CCA; `overheard()` is polled before
/// every CCA and aborts the attempt when it returns true.
pub fn csma_transmit(
    config: &CsmaConfig,
    mut channel_busy: impl FnMut(u32) -> bool,
    mut overheard: impl FnMut() -> bool,
    rng: &mut RngStream,
) -> Result<TxAttemptResult> {
    let mut csma = CsmaProcess::new(config.default_bounds()?, config.max_csma_backoffs);
    let outcome = loop {
        csma.draw_backoff(rng);
        if overheard() {
            break TxOutcome::Aborted;
        }
        let busy = channel_busy(csma.cca_attempts());
        match csma.on_cca(busy) {
            CcaVerdict::Transmit => break TxOutcome::Sent,
            CcaVerdict::BackoffAgain => continue,
            CcaVerdict::ChannelAccessFailure => break TxOutcome::ChannelAccessFailure,
        }
    };
    Ok(TxAttemptResult {
        outcome,
        total_backoff_s: csma.total_backoff_units() as f64 * config.backoff_unit_s,
        cca_attempts: csma.cca_attempts(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnicastOutcome {
    Acked,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnicastResult {
    pub outcome: UnicastOutcome,
    pub attempts: u32,
    pub attempt_results: Vec<TxAttemptResult>,
}

/// Up to `1 + mac_retries` CSMA attempts, each followed by an ACK wait.
///
/// `channel_busy(attempt, cca)` drives CCA results and `acked(attempt)`
/// reports whether the ACK arrived within `ack_timeout_s`. A channel access
/// failure ends the loop immediately.
pub fn unicast_with_ack(
    config: &CsmaConfig,
    ack_timeout_s: f64,
    mut channel_busy: impl FnMut(u32, u32) -> bool,
    mut acked: impl FnMut(u32) -> bool,
    rng: &mut RngStream,
) -> Result<UnicastResult> {
    if !(ack_timeout_s > 0.0) {
        return Err(invalid("ack timeout must be positive"));
    }
    let mut results = Vec::new();
    for attempt in 1..=1 + config.mac_retries as u32 {
        let r = csma_transmit(config, |cca| channel_busy(attempt, cca), || false, rng)?;
        let outcome = r.outcome;
        results.push(r);
        if outcome != TxOutcome::Sent {
            break;
        }
        if acked(attempt) {
            return Ok(UnicastResult {
                outcome: UnicastOutcome::Acked,
                attempts: attempt,
                attempt_results: results,
            });
        }
    }
    Ok(UnicastResult {
        outcome: UnicastOutcome::Failed,
        attempts: results.len() as u32,
        attempt_results: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Purpose;

    fn rng() -> RngStream {
        RngStream::global(3, Purpose::Backoff)
    }

    #[test]
    fn default_timing_constants() {
        let c = CsmaConfig::default();
        assert_eq!(c.backoff_unit().as_micros(), 320);
        assert_eq!(SimTime::from_secs(c.cca_s).as_micros(), 128);
        assert_eq!(SimTime::from_secs(c.turnaround_s).as_micros(), 192);
        assert_eq!(SimTime::from_secs(c.ack_timeout_s).as_micros(), 864);
    }

    #[test]
    fn airtime_examples() {
        assert!((airtime(70, 250_000.0).unwrap() - 0.00224).abs() < 1e-15);
        assert!((airtime(1, 250_000.0).unwrap() - 32e-6).abs() < 1e-18);
        assert!(airtime(70, 0.0).is_err());
        assert!(airtime(0, 250_000.0).is_err());
        assert_eq!(airtime_of(70, 250_000.0).unwrap().as_micros(), 2240);
    }

    #[test]
    fn idle_channel_first_backoff_within_window() {
        let c = CsmaConfig::default().with_bounds(BeBounds::new(2, 4).unwrap());
        let mut r = rng();
        let mut seen = [false; 4];
        for _ in 0..500 {
            let res = csma_transmit(&c, |_| false, || false, &mut r).unwrap();
            assert_eq!(res.outcome, TxOutcome::Sent);
            assert_eq!(res.cca_attempts, 1);
            let units = (res.total_backoff_s / c.backoff_unit_s).round() as usize;
            assert!(units <= 3);
            seen[units] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn busy_channel_fails_after_eight_ccas() {
        let c = CsmaConfig::default();
        let res = csma_transmit(&c, |_| true, || false, &mut rng()).unwrap();
        assert_eq!(res.outcome, TxOutcome::ChannelAccessFailure);
        assert_eq!(res.cca_attempts, 8);
    }

    #[test]
    fn zero_be_means_no_backoff() {
        let c = CsmaConfig::default().with_bounds(BeBounds::new(0, 0).unwrap());
        let res = csma_transmit(&c, |_| false, || false, &mut rng()).unwrap();
        assert_eq!(res.outcome, TxOutcome::Sent);
        assert_eq!(res.total_backoff_s, 0.0);
    }

    #[test]
    fn overhearing_aborts() {
        let c = CsmaConfig::default();
        let mut polls = 0;
        let res = csma_transmit(
            &c,
            |_| true,
            || {
                polls += 1;
                polls == 3
            },
            &mut rng(),
        )
        .unwrap();
        assert_eq!(res.outcome, TxOutcome::Aborted);
        assert_eq!(res.cca_attempts, 2);
    }

    #[test]
    fn be_saturates_at_max() {
        let mut p = CsmaProcess::new(BeBounds::new(3, 5).unwrap(), 7);
        let mut bes = vec![p.be()];
        while p.on_cca(true) == CcaVerdict::BackoffAgain {
            bes.push(p.be());
        }
        assert_eq!(bes, vec![3, 4, 5, 5, 5, 5, 5, 5]);
    }

    #[test]
    fn unicast_acked_first_attempt() {
        let c = CsmaConfig::default();
        let r = unicast_with_ack(&c, c.ack_timeout_s, |_, _| false, |_| true, &mut rng()).unwrap();
        assert_eq!(r.outcome, UnicastOutcome::Acked);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn unicast_exhausts_retries() {
        let c = CsmaConfig::default();
        let r = unicast_with_ack(&c, c.ack_timeout_s, |_, _| false, |_| false, &mut rng()).unwrap();
        assert_eq!(r.outcome, UnicastOutcome::Failed);
        assert_eq!(r.attempts, 4);
    }

    #[test]
    fn unicast_caf_terminates_loop() {
        let c = CsmaConfig::default();
        let r = unicast_with_ack(
            &c,
            c.ack_timeout_s,
            |attempt, _| attempt == 2,
            |_| false,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(r.outcome, UnicastOutcome::Failed);
        assert_eq!(r.attempts, 2);
        assert_eq!(r.attempt_results[0].outcome, TxOutcome::Sent);
        assert_eq!(
            r.attempt_results[1].outcome,
            TxOutcome::ChannelAccessFailure
        );
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(BeBounds::new(5, 3).is_err());
        let c = CsmaConfig {
            mac_min_be: 6,
            mac_max_be: 4,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
