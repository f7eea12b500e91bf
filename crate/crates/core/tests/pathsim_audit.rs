use std::collections::HashSet;

use waterweights_core::consensus::{ConsensusSnapshot, RelayEntry};
use waterweights_core::pathsim::{
    ActivityModel, AdversaryRelay, AdversarySpec, Algorithm, CircuitOutcome, RoleHint, Simulation, SimulationConfig,
    GUARD_LIFETIME,
};

const ORIGIN: i64 = 1_420_070_400;
const DAY: i64 = 86_400;

/// A crowded network: few /16s and some declared families, so conflicts
/// come up often.
fn crowded() -> ConsensusSnapshot {
    let mut relays = Vec::new();
    for i in 0..12u8 {
        relays.push(
            RelayEntry::new(format!("G{i}"), "g", 1000 + 100 * u64::from(i))
                .with_flags(["Guard"])
                .with_subnet(10, i % 4),
        );
    }
    for i in 0..6u8 {
        relays.push(RelayEntry::new(format!("M{i}"), "m", 900).with_subnet(10, i % 4));
    }
    for i in 0..5u8 {
        let policy = if i % 2 == 0 { "accept:443;reject:*" } else { "accept:80;reject:*" };
        relays.push(
            RelayEntry::new(format!("E{i}"), "e", 500)
                .with_flags(["Exit"])
                .with_policy(policy.parse().unwrap())
                .with_subnet(10, i % 4),
        );
    }
    relays[0] = relays[0].clone().with_family(["E0", "M1"]);
    relays[13] = relays[13].clone().with_family(["G2"]);
    ConsensusSnapshot::new(ORIGIN, relays).unwrap()
}

fn config(clients: u64, days: i64, interval: i64, ports: Vec<u16>) -> SimulationConfig {
    let mut cfg = SimulationConfig::new(Algorithm::Waterfilling, clients, 99);
    cfg.end_time = Some(ORIGIN + days * DAY);
    cfg.activity = ActivityModel {
        daily_windows: vec![(0, DAY as u32)],
        interval,
        ports,
    };
    cfg
}

#[test]
fn every_built_circuit_respects_the_constraints() {
    let snap = crowded();
    let sim = Simulation::new(&[snap], &AdversarySpec::none(), config(40, 3, 1800, vec![80, 443])).unwrap();
    let mut built = 0;
    for id in 0..40 {
        sim.run_client(id, |ev| {
            let CircuitOutcome::Built(c) = ev.outcome else { return };
            built += 1;
            let relays = ev.prepared.snapshot().relays();
            let (g, m, x) = (&relays[c.guard], &relays[c.middle], &relays[c.exit]);
            assert!(g.is_guard(), "{} used as guard", g.fingerprint);
            assert!(ev.guard_list.iter().any(|e| e.fingerprint == g.fingerprint));
            assert!(x.exit_policy.accepts(ev.stream.destination_port));
            assert!(!g.conflicts_with(m) && !g.conflicts_with(x) && !m.conflicts_with(x), "{c:?}");
        });
    }
    assert!(built > 1000);
}

#[test]
fn guards_persist_until_their_deadline() {
    let snap = crowded();
    let sim = Simulation::new(&[snap], &AdversarySpec::none(), config(10, 200, 6 * 3600, vec![443])).unwrap();
    let mut rotations = 0;
    for id in 0..10 {
        let mut previous: Option<Vec<(String, i64)>> = None;
        sim.run_client(id, |ev| {
            let now = ev.stream.time;
            assert_eq!(ev.guard_list.len(), 3);
            for e in ev.guard_list {
                let life = e.rotation_deadline - e.chosen_at;
                assert!((GUARD_LIFETIME.0..=GUARD_LIFETIME.1).contains(&life), "lifetime {life}");
                assert!(e.chosen_at <= now && now < e.rotation_deadline);
            }
            let current: Vec<(String, i64)> =
                ev.guard_list.iter().map(|e| (e.fingerprint.clone(), e.rotation_deadline)).collect();
            if let Some(prev) = &previous {
                // A guard can expire and be picked again, so identity
                // includes the deadline.
                let kept: HashSet<&(String, i64)> = current.iter().collect();
                for entry @ (fp, deadline) in prev {
                    if !kept.contains(entry) {
                        // The network never changes, so only expiry removes a guard.
                        assert!(*deadline <= now, "{fp} dropped before {deadline}");
                        rotations += 1;
                    }
                }
            }
            previous = Some(current);
        });
    }
    // 200 days outlives every lifetime at least twice.
    assert!(rotations >= 10 * 3 * 2, "{rotations} rotations");
}

#[test]
fn single_guard_clients_split_evenly_against_half_the_guard_weight() {
    let relays = vec![
        RelayEntry::new("G1", "g", 4000).with_flags(["Guard"]).with_subnet(10, 1),
        RelayEntry::new("G2", "g", 6000).with_flags(["Guard"]).with_subnet(10, 2),
        RelayEntry::new("M1", "m", 5000).with_subnet(10, 3),
        RelayEntry::new("E1", "e", 3000)
            .with_flags(["Exit"])
            .with_policy("accept:*".parse().unwrap())
            .with_subnet(10, 4),
    ];
    let snap = ConsensusSnapshot::new(ORIGIN, relays).unwrap();
    let mut guard = AdversaryRelay::new(RoleHint::GuardLike, 10_000).with_fingerprint("EVIL");
    guard.subnet16 = Some(waterweights_core::consensus::Subnet16([192, 168]));
    let adversary = AdversarySpec::new(vec![guard]);
    const CLIENTS: u64 = 4000;
    let mut cfg = SimulationConfig::new(Algorithm::Abwrs, CLIENTS, 7);
    cfg.num_entry_guards = 1;
    cfg.end_time = Some(ORIGIN + 600);
    let sim = Simulation::new(&[snap], &adversary, cfg).unwrap();
    let mut evil = 0u64;
    for id in 0..CLIENTS {
        let mut first = None;
        sim.run_client(id, |ev| {
            first.get_or_insert_with(|| ev.guard_list[0].fingerprint.clone());
        });
        if first.as_deref() == Some("EVIL") {
            evil += 1;
        }
    }
    // Binomial(4000, 1/2): three standard deviations is about 95 clients.
    let sd = (CLIENTS as f64 * 0.25).sqrt();
    let z = (evil as f64 - CLIENTS as f64 / 2.0) / sd;
    assert!(z.abs() <= 3.0, "{evil} of {CLIENTS} picked the adversary (z = {z:.2})");
}
