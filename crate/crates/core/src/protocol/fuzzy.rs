//! Receiver-side priority computation for forwarding candidates: LQI
//! fuzzification, trust degree, the priority lookup table and the dynamic
//! holding delay derived from it.

use crate::engine::{RngStream, SimTime};
use crate::error::{invalid, Result};
use crate::mac::BeBounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LqiLevel {
    Low,
    Med,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrustDegree {
    High,
    Low,
    Ineligible,
}

impl LqiLevel {
    pub fn name(self) -> &'static str {
        match self {
            LqiLevel::Low => "LOW",
            LqiLevel::Med => "MED",
            LqiLevel::High => "HIGH",
        }
    }
}

impl TrustDegree {
    pub fn name(self) -> &'static str {
        match self {
            TrustDegree::High => "HIGH",
            TrustDegree::Low => "LOW",
            TrustDegree::Ineligible => "NONE",
        }
    }
}

/// Priority assigned to same-level candidates when no closer node exists.
pub const FALLBACK_PRIORITY: u8 = 7;
pub const MAX_PRIORITY: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzyDecision {
    pub lqi_norm: LqiLevel,
    pub deg_trust: TrustDegree,
    pub priority_level: u8,
    pub mac_min_be: u8,
    pub mac_max_be: u8,
}

impl FuzzyDecision {
    pub fn be_bounds(&self) -> BeBounds {
        BeBounds {
            min: self.mac_min_be,
            max: self.mac_max_be,
        }
    }
}

pub fn lqi_normalize(lqi: u8, lqi_tl: u8, lqi_th: u8) -> LqiLevel {
    debug_assert!(lqi_tl < lqi_th);
    if lqi <= lqi_tl {
        LqiLevel::Low
    } else if lqi >= lqi_th {
        LqiLevel::High
    } else {
        LqiLevel::Med
    }
}

pub fn trust_degree(trustworthy_count: usize) -> TrustDegree {
    match trustworthy_count {
        0 => TrustDegree::Ineligible,
        1 | 2 => TrustDegree::Low,
        _ => TrustDegree::High,
    }
}

/// Table lookup `(lqi, trust) -> (priority, macMinBE, macMaxBE)`.
///
/// Priorities 1..=6 follow the six table rows; the same-level fallback is
/// priority 7 with bounds (8, 10). An ineligible trust degree maps to the
/// LOW column, callers are expected to filter those candidates out first.
pub fn fuzzy_priority(
    lqi_norm: LqiLevel,
    deg_trust: TrustDegree,
    same_level_fallback: bool,
) -> FuzzyDecision {
    let (priority, min_be, max_be) = if same_level_fallback {
        (FALLBACK_PRIORITY, 8, 10)
    } else {
        match (lqi_norm, deg_trust) {
            (LqiLevel::High, TrustDegree::High) => (1, 2, 4),
            (LqiLevel::High, _) => (2, 3, 5),
            (LqiLevel::Med, TrustDegree::High) => (3, 4, 6),
            (LqiLevel::Med, _) => (4, 5, 7),
            (LqiLevel::Low, TrustDegree::High) => (5, 6, 8),
            (LqiLevel::Low, _) => (6, 7, 9),
        }
    };
    FuzzyDecision {
        lqi_norm,
        deg_trust,
        priority_level: priority,
        mac_min_be: min_be,
        mac_max_be: max_be,
    }
}

/// Holding delay `(priority - 1) * T + tau` with `tau` uniform on `[0, T)`
/// at microsecond resolution, so the bands of distinct priorities never
/// overlap.
pub fn compute_dhd(priority: u8, hold_t: SimTime, rng: &mut RngStream) -> Result<SimTime> {
    if !(1..=MAX_PRIORITY).contains(&priority) {
        return Err(invalid(format!("priority {priority} outside 1..=7")));
    }
    if hold_t == SimTime::ZERO {
        return Err(invalid("holding time must be positive"));
    }
    let t = hold_t.as_micros();
    let tau = rng.uniform_int(0, t - 1);
    Ok(SimTime::from_micros((priority as u64 - 1) * t + tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Purpose;

    #[test]
    fn lqi_bands() {
        assert_eq!(lqi_normalize(85, 85, 170), LqiLevel::Low);
        assert_eq!(lqi_normalize(170, 85, 170), LqiLevel::High);
        assert_eq!(lqi_normalize(86, 85, 170), LqiLevel::Med);
        assert_eq!(lqi_normalize(169, 85, 170), LqiLevel::Med);
        assert_eq!(lqi_normalize(0, 85, 170), LqiLevel::Low);
        assert_eq!(lqi_normalize(255, 85, 170), LqiLevel::High);
    }

    #[test]
    fn trust_degree_bands() {
        assert_eq!(trust_degree(0), TrustDegree::Ineligible);
        assert_eq!(trust_degree(1), TrustDegree::Low);
        assert_eq!(trust_degree(2), TrustDegree::Low);
        assert_eq!(trust_degree(3), TrustDegree::High);
    }

    #[test]
    fn table_corners() {
        let d = fuzzy_priority(LqiLevel::High, TrustDegree::High, false);
        assert_eq!((d.priority_level, d.mac_min_be, d.mac_max_be), (1, 2, 4));
        let d = fuzzy_priority(LqiLevel::Low, TrustDegree::Low, false);
        assert_eq!((d.priority_level, d.mac_min_be, d.mac_max_be), (6, 7, 9));
        let d = fuzzy_priority(LqiLevel::High, TrustDegree::High, true);
        assert_eq!(d.priority_level, 7);
        assert_eq!(d.be_bounds(), BeBounds { min: 8, max: 10 });
    }

    #[test]
    fn dhd_bands() {
        let mut rng = RngStream::global(5, Purpose::Jitter);
        let t = SimTime::from_secs(0.005);
        for _ in 0..1000 {
            let d = compute_dhd(1, t, &mut rng).unwrap().as_micros();
            assert!(d < 5000);
            let d = compute_dhd(3, t, &mut rng).unwrap().as_micros();
            assert!((10_000..15_000).contains(&d));
        }
        assert!(compute_dhd(0, t, &mut rng).is_err());
        assert!(compute_dhd(8, t, &mut rng).is_err());
        assert!(compute_dhd(1, SimTime::ZERO, &mut rng).is_err());
    }
}
