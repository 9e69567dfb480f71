use std::path::Path;

use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use opser_core::analysis::{
    cid_energy_cost, delivery_prob_dominance_check, opportunistic_delivery_prob, HopLinkProfile,
    LogBase,
};
use opser_core::engine::{Purpose, RngStream, Scheduler};
use opser_core::protocol::fuzzy::MAX_PRIORITY;
use opser_core::protocol::{
    compute_dhd, fuzzy_priority, lqi_normalize, trust_degree, trust_update, LqiLevel, PacketKey,
    SeenCache, TrustDegree, TrustEvent,
};
use opser_core::radio::{prr_vs_distance, rssi_to_lqi, PropagationParams};
use opser_core::scenario::sweep::SweepSpec;
use opser_core::scenario::Topology;
use opser_core::*;

fn trust_event() -> impl Strategy<Value = TrustEvent> {
    prop_oneof![
        Just(TrustEvent::Success),
        Just(TrustEvent::Failure),
        Just(TrustEvent::OpportunisticWinReset),
    ]
}

fn profile() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 1..6), 1..8)
}

proptest! {
    #[test]
    fn trust_stays_in_unit_interval(events in prop::collection::vec(trust_event(), 0..300)) {
        let mut tv = 0.5;
        for e in events {
            let next = trust_update(tv, e);
            prop_assert!((0.0..=1.0).contains(&next));
            match e {
                TrustEvent::Success => prop_assert!(next >= tv),
                TrustEvent::Failure => prop_assert!(next <= tv),
                TrustEvent::OpportunisticWinReset => prop_assert_eq!(next, 0.5),
            }
            tv = next;
        }
    }

    #[test]
    fn holding_delay_stays_in_band(prio in 1u8..=MAX_PRIORITY, t_us in 1u64..100_000, seed: u64) {
        let t = SimTime::from_micros(t_us);
        let mut rng = RngStream::new(seed, 0);
        let d = compute_dhd(prio, t, &mut rng).unwrap();
        prop_assert!(d >= t.times(prio as u64 - 1));
        prop_assert!(d < t.times(prio as u64));
    }

    #[test]
    fn holding_delay_rejects_bad_priority(prio in prop_oneof![Just(0u8), (MAX_PRIORITY + 1)..=u8::MAX]) {
        let mut rng = RngStream::new(1, 0);
        prop_assert!(compute_dhd(prio, SimTime::from_micros(5_000), &mut rng).is_err());
    }

    #[test]
    fn lqi_is_monotone(a in -200.0f64..50.0, b in -200.0f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rssi_to_lqi(lo, -110.0, -45.0) <= rssi_to_lqi(hi, -110.0, -45.0));
    }

    #[test]
    fn lqi_levels_respect_thresholds(lqi: u8, tl in 0u8..254) {
        let th = tl + 1 + (lqi % (255 - tl));
        let level = lqi_normalize(lqi, tl, th);
        let want = if lqi <= tl { LqiLevel::Low } else if lqi >= th { LqiLevel::High } else { LqiLevel::Med };
        prop_assert_eq!(level, want);
    }

    #[test]
    fn better_inputs_never_lower_priority(count in 1usize..10) {
        // Higher link quality and more trusted neighbours give a smaller
        // priority number and a shorter backoff window.
        let deg = trust_degree(count);
        prop_assert_ne!(deg, TrustDegree::Ineligible);
        let levels = [LqiLevel::High, LqiLevel::Med, LqiLevel::Low];
        for pair in levels.windows(2) {
            let a = fuzzy_priority(pair[0], deg, false);
            let b = fuzzy_priority(pair[1], deg, false);
            prop_assert!(a.priority_level < b.priority_level);
            prop_assert!(a.mac_min_be < b.mac_min_be && a.mac_max_be < b.mac_max_be);
        }
    }

    #[test]
    fn opportunistic_dominates_unicast(probs in profile()) {
        let prof = HopLinkProfile::new(probs).unwrap();
        let d = delivery_prob_dominance_check(&prof).unwrap();
        prop_assert!(d.holds);
        prop_assert!(d.p_opportunistic <= 1.0 && d.p_unicast >= 0.0);
    }

    #[test]
    fn single_candidate_profiles_coincide(probs in prop::collection::vec(0.0f64..=1.0, 1..8)) {
        let prof = HopLinkProfile::new(probs.iter().map(|&p| vec![p]).collect()).unwrap();
        let d = delivery_prob_dominance_check(&prof).unwrap();
        prop_assert!((d.p_opportunistic - d.p_unicast).abs() < 1e-15);
        prop_assert!(!d.strict_expected);
    }

    #[test]
    fn cid_cost_sums_per_node_terms(degrees in prop::collection::vec(0.0f64..50.0, 1..200), e_tx in 0.0f64..1e-3, e_rx in 0.0f64..1e-3, rounds in 1u32..4) {
        let cost = cid_energy_cost(&degrees, e_tx, e_rx, rounds, LogBase::Natural).unwrap();
        let n = degrees.len() as f64;
        let want = rounds as f64 * (n * e_tx + degrees.iter().sum::<f64>() * e_rx);
        prop_assert!((cost.total_j - want).abs() <= 1e-12 * want.max(1.0));
        prop_assert!((cost.bound_j - (n * e_tx + n * n.ln() * e_rx)).abs() <= 1e-15 * cost.bound_j.max(1.0));
    }

    #[test]
    fn seen_cache_is_bounded(cap in 1usize..50, keys in prop::collection::vec((0u16..20, 0u32..40), 0..300)) {
        let mut cache = SeenCache::new(cap);
        for (s, p) in keys {
            let key = PacketKey { source: NodeId(s), packet_id: p };
            let was_new = !cache.contains(&key);
            prop_assert_eq!(cache.insert(key), was_new);
            prop_assert!(cache.contains(&key));
            prop_assert!(cache.len() <= cap);
        }
    }

    #[test]
    fn scheduler_fires_in_time_then_insertion_order(times in prop::collection::vec(0u64..1_000, 1..200)) {
        let mut s = Scheduler::new();
        for (i, &t) in times.iter().enumerate() {
            s.schedule(SimTime::from_micros(t), i).unwrap();
        }
        let mut last = (SimTime::ZERO, 0usize);
        let mut first = true;
        let mut count = 0;
        while let Some(ev) = s.pop_until(SimTime::from_micros(1_000)) {
            if !first {
                prop_assert!(ev.fire_time > last.0 || (ev.fire_time == last.0 && ev.payload > last.1));
            }
            first = false;
            last = (ev.fire_time, ev.payload);
            count += 1;
        }
        prop_assert_eq!(count, times.len());
    }

    #[test]
    fn scenario_survives_toml(
        side in 1u16..20,
        spacing in 1.0f64..50.0,
        rate in 0.1f64..20.0,
        duration in 1.0f64..500.0,
        sigma in 0.0f64..8.0,
        protocol in prop_oneof![Just(ProtocolKind::Opser), Just(ProtocolKind::Oppbcast), Just(ProtocolKind::GreedyUnicast)],
    ) {
        let mut sc = Scenario {
            protocol,
            duration_s: duration,
            topology: Topology::Grid { rows: side, cols: side, spacing_m: spacing },
            ..Default::default()
        };
        sc.traffic.rate_pps = rate;
        sc.propagation.sigma_db = sigma;
        let back = Scenario::from_toml(&sc.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, sc);
    }

    #[test]
    fn sweep_expands_the_cartesian_product(a in 1usize..4, b in 1usize..4, seeds in 1usize..5) {
        let sides: Vec<String> = (0..a).map(|i| (3 + i).to_string()).collect();
        let rates: Vec<String> = (0..b).map(|i| format!("{}.0", i + 1)).collect();
        let seed_list: Vec<String> = (0..seeds).map(|i| i.to_string()).collect();
        let text = format!(
            "name = \"p\"\nseeds = [{}]\n[sweep]\n\"topology.side\" = [{}]\n\"traffic.rate_pps\" = [{}]\n",
            seed_list.join(", "),
            sides.join(", "),
            rates.join(", ")
        );
        let plan = SweepSpec::from_toml(&text).unwrap().plan(Path::new(".")).unwrap();
        prop_assert_eq!(plan.points.len(), a * b);
        prop_assert_eq!(plan.run_count(), a * b * seeds);
        for p in &plan.points {
            if let Topology::Grid { rows, cols, .. } = p.scenario.topology {
                prop_assert_eq!(rows, cols);
            } else {
                prop_assert!(false, "grid expected");
            }
        }
    }
}

#[test]
fn opportunistic_matches_monte_carlo() {
    let prof = HopLinkProfile::new(vec![vec![0.3, 0.6], vec![0.5], vec![0.2, 0.2, 0.9]]).unwrap();
    let p = opportunistic_delivery_prob(&prof).unwrap();
    let want = (1.0 - 0.7 * 0.4) * 0.5 * (1.0 - 0.8 * 0.8 * 0.1);
    assert!((p - want).abs() < 1e-15);
    let mut rng = RngStream::global(5, Purpose::Analysis);
    let trials = 200_000;
    let hits = (0..trials)
        .filter(|_| {
            prof.per_hop_link_probs
                .iter()
                .all(|hop| hop.iter().fold(false, |any, &q| (rng.uniform() < q) | any))
        })
        .count();
    let est = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((est - p).abs() < 4.0 * se, "{est} vs {p}");
}

#[test]
fn prr_follows_gaussian_tail() {
    let pp = PropagationParams::default();
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let mut rng = RngStream::global(3, Purpose::Analysis);
    for d in [10.0, 25.0, 35.0, 45.0, 60.0] {
        let prr = prr_vs_distance(&pp, d, 20_000, &mut rng).unwrap();
        let z = (pp.rx_thresh_dbm - pp.mean_rssi(d).unwrap()) / pp.sigma_db;
        let p = 1.0 - gauss.cdf(z);
        let se = (p * (1.0 - p) / 20_000.0f64).sqrt().max(1.0 / 20_000.0);
        assert!((prr - p).abs() < 4.0 * se, "d={d}: {prr} vs {p}");
    }
}

#[test]
fn deterministic_range_matches_sensitivity() {
    let pp = PropagationParams {
        sigma_db: 0.0,
        ..Default::default()
    };
    let r = pp.deterministic_range_m();
    assert!(pp.mean_rssi(r * 0.999).unwrap() > pp.rx_thresh_dbm);
    assert!(pp.mean_rssi(r * 1.001).unwrap() < pp.rx_thresh_dbm);
}
