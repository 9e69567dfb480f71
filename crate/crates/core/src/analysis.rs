//! Closed-form oracles: end-to-end delivery probability under opportunistic
//! and single-path forwarding, and the energy cost of the corona flood.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Per-hop link delivery probabilities of every forwarding candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopLinkProfile {
    pub per_hop_link_probs: Vec<Vec<f64>>,
}

impl HopLinkProfile {
    pub fn new(per_hop_link_probs: Vec<Vec<f64>>) -> Result<Self> {
        let p = HopLinkProfile { per_hop_link_probs };
        p.validate()?;
        Ok(p)
    }

    /// The same candidate set repeated over `n_hops` hops.
    pub fn uniform(candidates: &[f64], n_hops: usize) -> Result<Self> {
        Self::new(vec![candidates.to_vec(); n_hops])
    }

    pub fn n_hops(&self) -> usize {
        self.per_hop_link_probs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_hop_link_probs.is_empty() {
            return Err(invalid("profile needs at least one hop"));
        }
        for hop in &self.per_hop_link_probs {
            if hop.is_empty() {
                return Err(invalid("every hop needs at least one candidate"));
            }
            for &p in hop {
                if !(0.0..1.0).contains(&p) {
                    return Err(invalid(format!("link probability {p} outside [0, 1)")));
                }
            }
        }
        Ok(())
    }

    /// Best candidate per hop.
    pub fn best_per_hop(&self) -> Vec<f64> {
        self.per_hop_link_probs
            .iter()
            .map(|h| h.iter().copied().fold(0.0, f64::max))
            .collect()
    }
}

/// Product over hops of the probability that at least one candidate
/// receives the packet.
pub fn opportunistic_delivery_prob(profile: &HopLinkProfile) -> Result<f64> {
    profile.validate()?;
    Ok(profile
        .per_hop_link_probs
        .iter()
        .map(|hop| {
            // Never below the best single link, which rounding of the
            // complement could otherwise undercut.
            let best = hop.iter().copied().fold(0.0, f64::max);
            (1.0 - hop.iter().map(|p| 1.0 - p).product::<f64>()).max(best)
        })
        .product())
}

pub fn unicast_delivery_prob(p: f64, n_hops: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(invalid(format!("link probability {p} outside [0, 1)")));
    }
    if n_hops == 0 {
        return Err(invalid("n_hops must be at least 1"));
    }
    Ok(p.powi(n_hops as i32))
}

/// Unicast over the best candidate of each hop.
pub fn unicast_delivery_prob_per_hop(profile: &HopLinkProfile) -> Result<f64> {
    profile.validate()?;
    Ok(profile.best_per_hop().iter().product())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dominance {
    pub p_opportunistic: f64,
    pub p_unicast: f64,
    /// `p_opportunistic >= p_unicast`.
    pub holds: bool,
    /// Some non-best candidate has non-zero probability, so the gap must
    /// be strict.
    pub strict_expected: bool,
}

pub fn delivery_prob_dominance_check(profile: &HopLinkProfile) -> Result<Dominance> {
    let po = opportunistic_delivery_prob(profile)?;
    let pu = unicast_delivery_prob_per_hop(profile)?;
    let strict_expected = profile.per_hop_link_probs.iter().all(|hop| {
        let best = hop.iter().copied().fold(0.0, f64::max);
        best > 0.0
    }) && profile.per_hop_link_probs.iter().any(|hop| {
        let best_idx = hop
            .iter()
            .enumerate()
            .fold(0, |bi, (i, &p)| if p > hop[bi] { i } else { bi });
        hop.iter()
            .enumerate()
            .any(|(i, &p)| i != best_idx && p > 0.0)
    });
    Ok(Dominance {
        p_opportunistic: po,
        p_unicast: pu,
        holds: po >= pu,
        strict_expected,
    })
}

/// Logarithm used by the asymptotic flood-cost bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CidEnergyCost {
    pub per_node_j: Vec<f64>,
    pub total_j: f64,
    /// `N * e_tx + N * log(N) * e_rx`.
    pub bound_j: f64,
}

/// Flood cost with node `i` transmitting once and receiving `degrees[i]`
/// copies per round.
pub fn cid_energy_cost(
    degrees: &[f64],
    e_tx_j: f64,
    e_rx_j: f64,
    rounds: u32,
    base: LogBase,
) -> Result<CidEnergyCost> {
    if rounds == 0 {
        return Err(invalid("rounds must be at least 1"));
    }
    if degrees.is_empty() {
        return Err(invalid("at least one node is required"));
    }
    if degrees.iter().any(|d| !(*d >= 0.0)) || !(e_tx_j >= 0.0 && e_rx_j >= 0.0) {
        return Err(invalid("degrees and energies must be non-negative"));
    }
    let per_node_j: Vec<f64> = degrees
        .iter()
        .map(|d| rounds as f64 * (e_tx_j + d * e_rx_j))
        .collect();
    let total_j = per_node_j.iter().sum();
    let n = degrees.len() as f64;
    let bound_j = n * e_tx_j + n * base.log(n) * e_rx_j;
    Ok(CidEnergyCost {
        per_node_j,
        total_j,
        bound_j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn opportunistic_examples() {
        let p = HopLinkProfile::uniform(&[0.8], 3).unwrap();
        assert!(close(opportunistic_delivery_prob(&p).unwrap(), 0.512));
        let p = HopLinkProfile::uniform(&[0.5, 0.5], 1).unwrap();
        assert!(close(opportunistic_delivery_prob(&p).unwrap(), 0.75));
        let p = HopLinkProfile::uniform(&[0.3, 0.4, 0.5], 2).unwrap();
        assert!(close(opportunistic_delivery_prob(&p).unwrap(), 0.6241));
        assert!(HopLinkProfile::uniform(&[1.0], 1).is_err());
    }

    #[test]
    fn unicast_examples() {
        assert!(close(unicast_delivery_prob(0.9, 1).unwrap(), 0.9));
        assert!(close(unicast_delivery_prob(0.9, 5).unwrap(), 0.59049));
        assert_eq!(unicast_delivery_prob(0.0, 4).unwrap(), 0.0);
        let single = HopLinkProfile::uniform(&[0.9], 5).unwrap();
        assert!(close(
            opportunistic_delivery_prob(&single).unwrap(),
            0.59049
        ));
    }

    #[test]
    fn dominance_examples() {
        let d = delivery_prob_dominance_check(&HopLinkProfile::uniform(&[0.5, 0.5], 3).unwrap())
            .unwrap();
        assert!(close(d.p_opportunistic, 0.421875));
        assert!(close(d.p_unicast, 0.125));
        assert!(d.holds && d.strict_expected);
        let d =
            delivery_prob_dominance_check(&HopLinkProfile::uniform(&[0.7], 2).unwrap()).unwrap();
        assert_eq!(d.p_opportunistic, d.p_unicast);
        assert!(!d.strict_expected);
        let d = delivery_prob_dominance_check(&HopLinkProfile::uniform(&[0.7, 0.0], 2).unwrap())
            .unwrap();
        assert_eq!(d.p_opportunistic, d.p_unicast);
    }

    #[test]
    fn cid_cost_examples() {
        let c = cid_energy_cost(&[0.0], 1.0, 2.0, 1, LogBase::Natural).unwrap();
        assert_eq!(c.total_j, 1.0);
        let c = cid_energy_cost(&[4.0], 66.19e-6, 57.12e-6, 1, LogBase::Natural).unwrap();
        assert!((c.total_j - 294.67e-6).abs() < 1e-12);
        let c = cid_energy_cost(&[1.0; 10], 1.0, 1.0, 2, LogBase::Natural).unwrap();
        assert!(close(c.total_j, 40.0));
        assert!(close(c.bound_j, 10.0 + 10.0 * 10f64.ln()));
        assert!(cid_energy_cost(&[1.0], 1.0, 1.0, 0, LogBase::Natural).is_err());
    }
}
