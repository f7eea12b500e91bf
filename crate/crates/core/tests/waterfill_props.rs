use std::collections::HashMap;

use proptest::prelude::*;

use waterweights_core::consensus::{ConsensusSnapshot, LoadCase, RelayEntry};
use waterweights_core::selection::{selection_distribution, Position};
use waterweights_core::waterfill::{fill_to_target, solve_guard_waterfill};
use waterweights_core::weights::{PositionWeights, WeightMode};

fn scalar(wgg: f64) -> PositionWeights {
    PositionWeights {
        case: LoadCase::Case3aESgtM,
        mode: WeightMode::Standard,
        requested_mode: WeightMode::Standard,
        wgg,
        wmg: 1.0 - wgg,
        wee: 1.0,
        wme: 0.0,
        wmd: 0.0,
        wgd: 0.0,
        wed: 1.0,
        notes: Vec::new(),
    }
}

fn guards(bws: &[u64]) -> ConsensusSnapshot {
    let relays = bws
        .iter()
        .enumerate()
        .map(|(i, &bw)| RelayEntry::new(format!("G{i:04}"), "g", bw).with_flags(["Guard"]))
        .collect();
    ConsensusSnapshot::new(0, relays).unwrap()
}

fn bandwidths() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(prop_oneof![1u64..100, 100u64..100_000, 100_000u64..1_000_000_000], 1..60)
}

fn wgg() -> impl Strategy<Value = f64> {
    (1u32..10_000).prop_map(|k| k as f64 / 10_000.0)
}

proptest! {
    #[test]
    fn conservation_and_plateau(bws in bandwidths(), wgg in wgg()) {
        let snap = guards(&bws);
        let s = solve_guard_waterfill(&snap, &scalar(wgg)).unwrap();
        let target = wgg * snap.totals().g as f64;
        let filled: f64 = s.per_relay.iter().map(|r| r.weight * r.bandwidth as f64).sum();
        prop_assert!((filled - target).abs() <= 1e-9 * target.max(1.0));
        for (rank, r) in s.per_relay.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&r.weight));
            prop_assert!((r.guard + r.middle - 1.0).abs() < 1e-12);
            if rank < s.pivot_index {
                prop_assert!((r.weight * r.bandwidth as f64 - s.water_level).abs() <= 1e-9 * s.water_level);
            } else {
                prop_assert_eq!(r.weight, 1.0);
                prop_assert!(r.bandwidth as f64 <= s.water_level * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn relabelling_and_reordering_do_not_matter(bws in bandwidths(), wgg in wgg(), seed in any::<u64>()) {
        let snap = guards(&bws);
        let mut order: Vec<usize> = (0..bws.len()).collect();
        // Deterministic shuffle from the seed.
        let mut x = seed | 1;
        for i in (1..order.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            order.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let shuffled = ConsensusSnapshot::new(0, order.iter().map(|&i| snap.relays()[i].clone()).collect()).unwrap();
        let a = solve_guard_waterfill(&snap, &scalar(wgg)).unwrap();
        let b = solve_guard_waterfill(&shuffled, &scalar(wgg)).unwrap();
        prop_assert_eq!(a.water_level, b.water_level);
        prop_assert_eq!(a.pivot_index, b.pivot_index);
        let wb: HashMap<&str, f64> = b.per_relay.iter().map(|r| (r.fingerprint.as_str(), r.weight)).collect();
        for r in &a.per_relay {
            prop_assert_eq!(r.weight, wb[r.fingerprint.as_str()]);
        }
    }

    #[test]
    fn entry_entropy_never_drops(bws in bandwidths(), wgg in wgg()) {
        let snap = guards(&bws);
        let w = scalar(wgg);
        let s = solve_guard_waterfill(&snap, &w).unwrap();
        let before = selection_distribution(&snap, &w, &[], Position::Entry, None).unwrap().entropy();
        let after = selection_distribution(&snap, &w, std::slice::from_ref(&s), Position::Entry, None).unwrap().entropy();
        prop_assert!(after >= before - 1e-12, "{after} < {before}");
    }

    #[test]
    fn fill_matches_bisection(mut bws in prop::collection::vec(1u64..1_000_000, 1..40), frac in 0.001f64..1.0) {
        bws.sort_unstable_by(|a, b| b.cmp(a));
        let total: u64 = bws.iter().sum();
        let target = frac * total as f64;
        let got = fill_to_target(&bws, target).unwrap();
        // Independent reference: bisection on the level of sum(min(bw, L)).
        let filled = |l: f64| bws.iter().map(|&b| (b as f64).min(l)).sum::<f64>();
        let (mut lo, mut hi) = (0.0, bws[0] as f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if filled(mid) < target { lo = mid } else { hi = mid }
        }
        prop_assert!((got.level - hi).abs() <= 1e-7 * hi.max(1.0), "{} vs {}", got.level, hi);
    }
}

#[test]
fn everything_capped_when_target_is_small() {
    let s = fill_to_target(&[10, 10, 10], 3.0).unwrap();
    assert_eq!(s.level, 1.0);
    assert_eq!(s.pivot, 3);
    assert!(s.weights.iter().all(|&w| (w - 0.1).abs() < 1e-15));
}
