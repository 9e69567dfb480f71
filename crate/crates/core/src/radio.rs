//! Physical layer: received power under log-normal shadowing or two-ray
//! ground reflection, RSSI to LQI mapping, and per-frame reception
//! decisions with a co-channel capture rule.

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::error::{invalid, Error, Result};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationModel {
    LogNormalShadowing,
    TwoRayGroundWithError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationParams {
    pub model: PropagationModel,
    pub pt_dbm: f64,
    pub beta: f64,
    pub sigma_db: f64,
    pub d0_m: f64,
    /// Path loss at `d0_m`. Defaults to free-space loss at 1 m, 2.4 GHz.
    pub pl_d0_db: f64,
    /// Uniform per-packet drop probability, two-ray model only.
    pub error_rate: f64,
    pub rx_thresh_dbm: f64,
    pub cs_thresh_dbm: f64,
    pub ed_min_dbm: f64,
    pub ed_max_dbm: f64,
    /// Transmitter and receiver antenna height for the two-ray model.
    pub antenna_height_m: f64,
    pub frequency_hz: f64,
    /// A frame survives overlap only if it exceeds the summed interference
    /// by at least this margin.
    pub capture_margin_db: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            model: PropagationModel::LogNormalShadowing,
            pt_dbm: 0.0,
            beta: 4.5,
            sigma_db: 4.0,
            d0_m: 1.0,
            pl_d0_db: 40.05,
            error_rate: 0.0,
            rx_thresh_dbm: -110.0,
            cs_thresh_dbm: -110.0,
            ed_min_dbm: -110.0,
            ed_max_dbm: -45.0,
            antenna_height_m: 0.03125,
            frequency_hz: 2.4e9,
            capture_margin_db: 10.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ed_min_dbm < self.ed_max_dbm) {
            return Err(invalid("ed_min_dbm must be below ed_max_dbm"));
        }
        if !(self.sigma_db >= 0.0) {
            return Err(invalid("sigma_db must be non-negative"));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("beta must be positive"));
        }
        if !(self.d0_m > 0.0) {
            return Err(invalid("d0_m must be positive"));
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(invalid("error_rate must lie in [0, 1]"));
        }
        if !(self.antenna_height_m > 0.0 && self.frequency_hz > 0.0) {
            return Err(invalid("antenna height and frequency must be positive"));
        }
        Ok(())
    }

    /// Deterministic part of the received power at `distance_m`.
    pub fn mean_rssi(&self, distance_m: f64) -> Result<f64> {
        if !(distance_m > 0.0) {
            return Err(Error::DegenerateGeometry(distance_m));
        }
        Ok(match self.model {
            PropagationModel::LogNormalShadowing => {
                self.pt_dbm - self.pl_d0_db - 10.0 * self.beta * (distance_m / self.d0_m).log10()
            }
            PropagationModel::TwoRayGroundWithError => {
                let h = self.antenna_height_m;
                let lambda = SPEED_OF_LIGHT / self.frequency_hz;
                let crossover = 4.0 * std::f64::consts::PI * h * h / lambda;
                // Unit antenna gains and system loss.
                let gain = if distance_m < crossover {
                    let x = lambda / (4.0 * std::f64::consts::PI * distance_m);
                    x * x
                } else {
                    (h * h * h * h) / distance_m.powi(4)
                };
                self.pt_dbm + 10.0 * gain.log10()
            }
        })
    }

    /// Largest distance at which the mean received power still reaches the
    /// receiver sensitivity.
    pub fn deterministic_range_m(&self) -> f64 {
        match self.model {
            PropagationModel::LogNormalShadowing => {
                let budget = self.pt_dbm - self.pl_d0_db - self.rx_thresh_dbm;
                self.d0_m * 10f64.powf(budget / (10.0 * self.beta))
            }
            PropagationModel::TwoRayGroundWithError => {
                let h = self.antenna_height_m;
                let budget_lin = 10f64.powf((self.pt_dbm - self.rx_thresh_dbm) / 10.0);
                (h * h * h * h * budget_lin).powf(0.25)
            }
        }
    }
}

/// Outcome of one frame arriving at one receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxReport {
    pub rssi_dbm: f64,
    pub lqi: u8,
    pub received_ok: bool,
    pub collided: bool,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Received power including the shadowing draw. The two-ray model has no
/// shadowing term.
pub fn compute_rssi(
    params: &PropagationParams,
    distance_m: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    let mean = params.mean_rssi(distance_m)?;
    Ok(match params.model {
        PropagationModel::LogNormalShadowing => mean + rng.normal(0.0, params.sigma_db),
        PropagationModel::TwoRayGroundWithError => mean,
    })
}

/// Linear map of RSSI onto 0..=255 between the energy-detection bounds,
/// rounded half-up and clamped.
pub fn rssi_to_lqi(rssi_dbm: f64, ed_min_dbm: f64, ed_max_dbm: f64) -> u8 {
    debug_assert!(ed_min_dbm < ed_max_dbm);
    let clamped = rssi_dbm.clamp(ed_min_dbm, ed_max_dbm);
    let scaled = 255.0 * (clamped - ed_min_dbm) / (ed_max_dbm - ed_min_dbm);
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Decides whether a frame at `rssi_dbm` survives, given the summed power
/// of every frame that overlapped it (`interference_mw`, zero when alone).
///
/// Under the two-ray model one uniform draw is consumed per frame that
/// clears the sensitivity and capture checks.
pub fn reception_decision(
    params: &PropagationParams,
    rssi_dbm: f64,
    interference_mw: f64,
    rng: &mut RngStream,
) -> RxReport {
    let lqi = rssi_to_lqi(rssi_dbm, params.ed_min_dbm, params.ed_max_dbm);
    let audible = rssi_dbm >= params.rx_thresh_dbm;
    let captured = interference_mw <= 0.0
        || dbm_to_mw(rssi_dbm) >= dbm_to_mw(params.capture_margin_db) * interference_mw;
    let collided = audible && !captured;
    let mut received_ok = audible && captured;
    if received_ok && params.model == PropagationModel::TwoRayGroundWithError {
        received_ok = rng.uniform() >= params.error_rate;
    }
    RxReport {
        rssi_dbm,
        lqi,
        received_ok,
        collided,
    }
}

/// Convenience form of [`reception_decision`] taking interferer powers.
pub fn reception_decision_with(
    params: &PropagationParams,
    rssi_dbm: f64,
    interferers_dbm: &[f64],
    rng: &mut RngStream,
) -> RxReport {
    let interference: f64 = interferers_dbm.iter().map(|&p| dbm_to_mw(p)).sum();
    reception_decision(params, rssi_dbm, interference, rng)
}

/// Monte Carlo packet reception rate: the fraction of `trials` received
/// power draws at `distance_m` that reach the receiver sensitivity.
pub fn prr_vs_distance(
    params: &PropagationParams,
    distance_m: f64,
    trials: u32,
    rng: &mut RngStream,
) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let mut ok = 0u32;
    for _ in 0..trials {
        if compute_rssi(params, distance_m, rng)? >= params.rx_thresh_dbm {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Purpose;

    fn rng() -> RngStream {
        RngStream::global(11, Purpose::Analysis)
    }

    fn deterministic() -> PropagationParams {
        PropagationParams {
            sigma_db: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn rssi_at_reference_distance() {
        let p = deterministic();
        let r = compute_rssi(&p, 1.0, &mut rng()).unwrap();
        assert_eq!(r, p.pt_dbm - p.pl_d0_db);
    }

    #[test]
    fn rssi_at_ten_metres() {
        let p = deterministic();
        let r = compute_rssi(&p, 10.0, &mut rng()).unwrap();
        assert!((r - (-p.pl_d0_db - 45.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_distance_is_degenerate() {
        let p = deterministic();
        assert_eq!(
            compute_rssi(&p, 0.0, &mut rng()),
            Err(Error::DegenerateGeometry(0.0))
        );
        assert!(compute_rssi(&p, -3.0, &mut rng()).is_err());
    }

    #[test]
    fn shadowing_sample_std_dev() {
        let p = PropagationParams::default();
        let mut r = rng();
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| compute_rssi(&p, 20.0, &mut r).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 4.0).abs() < 0.1, "std {}", var.sqrt());
        assert!((mean - p.mean_rssi(20.0).unwrap()).abs() < 0.1);
    }

    #[test]
    fn lqi_endpoints_and_midpoint() {
        assert_eq!(rssi_to_lqi(-110.0, -110.0, -45.0), 0);
        assert_eq!(rssi_to_lqi(-45.0, -110.0, -45.0), 255);
        assert_eq!(rssi_to_lqi(-77.5, -110.0, -45.0), 128);
        assert_eq!(rssi_to_lqi(-200.0, -110.0, -45.0), 0);
        assert_eq!(rssi_to_lqi(10.0, -110.0, -45.0), 255);
    }

    #[test]
    fn below_sensitivity_fails() {
        let p = PropagationParams::default();
        let rep = reception_decision(&p, -120.0, 0.0, &mut rng());
        assert!(!rep.received_ok);
        assert!(!rep.collided);
    }

    #[test]
    fn single_strong_frame_received() {
        let p = PropagationParams::default();
        let rep = reception_decision(&p, -80.0, 0.0, &mut rng());
        assert!(rep.received_ok);
        assert!(!rep.collided);
    }

    #[test]
    fn equal_power_overlap_collides() {
        let p = PropagationParams::default();
        let rep = reception_decision_with(&p, -80.0, &[-80.0], &mut rng());
        assert!(!rep.received_ok);
        assert!(rep.collided);
    }

    #[test]
    fn capture_needs_ten_db() {
        let p = PropagationParams::default();
        assert!(reception_decision_with(&p, -70.0, &[-80.0], &mut rng()).received_ok);
        assert!(!reception_decision_with(&p, -70.5, &[-80.0], &mut rng()).received_ok);
        // Interferers add up.
        assert!(!reception_decision_with(&p, -70.0, &[-80.0, -80.0], &mut rng()).received_ok);
    }

    #[test]
    fn prr_step_without_shadowing() {
        let p = deterministic();
        let range = p.deterministic_range_m();
        assert_eq!(
            prr_vs_distance(&p, range * 0.9, 100, &mut rng()).unwrap(),
            1.0
        );
        assert_eq!(
            prr_vs_distance(&p, range * 1.1, 100, &mut rng()).unwrap(),
            0.0
        );
        assert!(prr_vs_distance(&p, 1.0, 0, &mut rng()).is_err());
    }

    #[test]
    fn two_ray_error_free_inside_range() {
        let p = PropagationParams {
            model: PropagationModel::TwoRayGroundWithError,
            error_rate: 0.0,
            ..Default::default()
        };
        let range = p.deterministic_range_m();
        assert!(range > 10.0 && range < 20.0, "range {range}");
        let mut r = rng();
        for d in [0.05, 1.0, 5.0, range * 0.99] {
            let rssi = compute_rssi(&p, d, &mut r).unwrap();
            assert!(
                reception_decision(&p, rssi, 0.0, &mut r).received_ok,
                "d={d}"
            );
        }
    }

    #[test]
    fn two_ray_error_rate_one_drops_everything() {
        let p = PropagationParams {
            model: PropagationModel::TwoRayGroundWithError,
            error_rate: 1.0,
            ..Default::default()
        };
        let mut r = rng();
        for _ in 0..100 {
            assert!(!reception_decision(&p, -60.0, 0.0, &mut r).received_ok);
        }
    }

    #[test]
    fn validation() {
        assert!(PropagationParams::default().validate().is_ok());
        let bad = PropagationParams {
            ed_min_dbm: -40.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PropagationParams {
            error_rate: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
