//! Monte Carlo simulation of client path selection over a sequence of
//! consensus snapshots.
//!
//! Each client keeps a list of entry guards, rotates them at a random
//! deadline 60 to 90 days after selection and replaces guards that leave
//! the network or lose the Guard flag. For every stream of the activity
//! schedule the client builds a circuit with the latest snapshot at or
//! before the stream time. A circuit is compromised when both its guard and
//! its exit belong to the adversary; building the circuit counts as
//! exposure whether or not the stream is used.
//!
//! Client `i` draws from ChaCha12 seeded with the run seed on stream `i`,
//! so results do not depend on how clients are scheduled across threads.

mod adversary;
mod client;
mod prepared;
mod records;
mod schedule;

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusSnapshot;
use crate::error::{Error, Result};
use crate::waterfill::TargetPool;
use crate::weights::WeightMode;

pub use adversary::{AdversaryRelay, AdversarySpec, InjectedSnapshot, InjectionMode, RoleHint};
pub use client::{
    build_circuit, Circuit, CircuitOutcome, ClientState, GuardEntry, DEFAULT_MAX_ATTEMPTS, DEFAULT_NUM_ENTRY_GUARDS,
    GUARD_LIFETIME,
};
pub use prepared::PreparedSnapshot;
pub use records::{compromise_curve, read_records_csv, write_records_csv, CompromiseRecord, CurvePoint, TimeSeries};
pub use schedule::{ActivityModel, StreamKind, StreamSpec};

/// Default simulated span past the last snapshot, in seconds.
pub const LAST_SNAPSHOT_SPAN: i64 = 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Scalar bandwidth-weights only.
    #[serde(rename = "abwrs")]
    Abwrs,
    /// Per-relay waterfilling on top of the standard weights.
    #[serde(rename = "wf")]
    Waterfilling,
    /// Waterfilling on top of guard-exit equalized weights.
    #[serde(rename = "wf-ge")]
    WaterfillingGe,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Abwrs => "abwrs",
            Algorithm::Waterfilling => "wf",
            Algorithm::WaterfillingGe => "wf-ge",
        }
    }

    pub fn weight_mode(self) -> WeightMode {
        match self {
            Algorithm::WaterfillingGe => WeightMode::GuardExitEqualized,
            _ => WeightMode::Standard,
        }
    }

    pub fn target_pools(self) -> &'static [TargetPool] {
        match self {
            Algorithm::Abwrs => &[],
            _ => &[TargetPool::GuardSet, TargetPool::DSet],
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abwrs" => Ok(Algorithm::Abwrs),
            "wf" => Ok(Algorithm::Waterfilling),
            "wf-ge" => Ok(Algorithm::WaterfillingGe),
            other => Err(Error::InvalidInput(format!("unknown algorithm {other:?} (abwrs, wf, wf-ge)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub algorithm: Algorithm,
    pub clients: u64,
    pub seed: u64,
    pub num_entry_guards: usize,
    pub activity: ActivityModel,
    /// Exclusive end of the simulated period (absolute seconds). Defaults to
    /// one hour past the last snapshot.
    pub end_time: Option<i64>,
    pub max_attempts: u32,
}

impl SimulationConfig {
    pub fn new(algorithm: Algorithm, clients: u64, seed: u64) -> Self {
        SimulationConfig {
            algorithm,
            clients,
            seed,
            num_entry_guards: DEFAULT_NUM_ENTRY_GUARDS,
            activity: ActivityModel::default(),
            end_time: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// What a client did for one stream.
#[derive(Debug)]
pub struct CircuitEvent<'a> {
    pub client_id: u64,
    pub prepared: &'a PreparedSnapshot,
    pub stream: &'a StreamSpec,
    pub outcome: CircuitOutcome,
    pub guard_list: &'a [GuardEntry],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientTally {
    pub streams_skipped: u64,
    pub circuits_failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    /// `valid_after` of the first snapshot; record times are relative to it.
    pub origin: i64,
    pub records: Vec<CompromiseRecord>,
    pub streams_skipped: u64,
    pub circuits_failed: u64,
}

/// A prepared run: snapshots injected and weighted, streams scheduled.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimulationConfig,
    prepared: Vec<PreparedSnapshot>,
    streams: Vec<StreamSpec>,
    /// Index into `prepared` for each stream.
    stream_snapshot: Vec<usize>,
    origin: i64,
}

impl Simulation {
    pub fn new(sequence: &[ConsensusSnapshot], adversary: &AdversarySpec, config: SimulationConfig) -> Result<Self> {
        let (first, last) = match (sequence.first(), sequence.last()) {
            (Some(f), Some(l)) => (f.valid_after(), l.valid_after()),
            _ => return Err(Error::InvalidInput("empty snapshot sequence".into())),
        };
        if let Some(w) = sequence.windows(2).find(|w| w[0].valid_after() >= w[1].valid_after()) {
            return Err(Error::InvalidInput(format!(
                "snapshots out of order: {} is followed by {}",
                w[0].valid_after(),
                w[1].valid_after()
            )));
        }
        if config.clients == 0 {
            return Err(Error::InvalidInput("at least one client is required".into()));
        }
        if config.num_entry_guards == 0 || config.max_attempts == 0 {
            return Err(Error::InvalidInput("guard count and attempt bound must be positive".into()));
        }
        let mut ports = config.activity.ports.clone();
        ports.sort_unstable();
        ports.dedup();
        let prepared = sequence
            .par_iter()
            .map(|s| PreparedSnapshot::new(s, adversary, config.algorithm, &ports))
            .collect::<Result<Vec<_>>>()?;
        let end = config.end_time.unwrap_or(last + LAST_SNAPSHOT_SPAN);
        let streams = config.activity.streams(first, end)?;
        let stream_snapshot = streams
            .iter()
            .map(|s| sequence.partition_point(|snap| snap.valid_after() <= s.time) - 1)
            .collect();
        Ok(Simulation {
            config,
            prepared,
            streams,
            stream_snapshot,
            origin: first,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn prepared(&self) -> &[PreparedSnapshot] {
        &self.prepared
    }

    pub fn streams(&self) -> &[StreamSpec] {
        &self.streams
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// Runs one client, reporting every stream to `observe`.
    pub fn run_client<F>(&self, client_id: u64, mut observe: F) -> (CompromiseRecord, ClientTally)
    where
        F: FnMut(&CircuitEvent<'_>),
    {
        let mut rng = ChaCha12Rng::seed_from_u64(self.config.seed);
        rng.set_stream(client_id);
        let mut state = ClientState::new(self.config.num_entry_guards, self.config.seed);
        let mut record = CompromiseRecord::new(client_id);
        let mut tally = ClientTally::default();
        for (stream, &si) in self.streams.iter().zip(&self.stream_snapshot) {
            let prepared = &self.prepared[si];
            let outcome = build_circuit(&mut state, prepared, stream, &mut rng, self.config.max_attempts);
            match outcome {
                CircuitOutcome::Built(circuit) => {
                    record.circuits_built += 1;
                    if circuit.is_compromised(prepared) {
                        record.circuits_compromised += 1;
                        record.first_compromise_time.get_or_insert(stream.time - self.origin);
                    }
                }
                CircuitOutcome::NoExit => tally.streams_skipped += 1,
                CircuitOutcome::Failed(_) => tally.circuits_failed += 1,
            }
            observe(&CircuitEvent {
                client_id,
                prepared,
                stream,
                outcome,
                guard_list: &state.guard_list,
            });
        }
        (record, tally)
    }

    /// Runs every client in parallel; output order is by client id.
    pub fn run(&self) -> SimulationOutput {
        let results: Vec<(CompromiseRecord, ClientTally)> = (0..self.config.clients)
            .into_par_iter()
            .map(|id| self.run_client(id, |_| {}))
            .collect();
        let mut out = SimulationOutput {
            origin: self.origin,
            records: Vec::with_capacity(results.len()),
            streams_skipped: 0,
            circuits_failed: 0,
        };
        for (record, tally) in results {
            out.records.push(record);
            out.streams_skipped += tally.streams_skipped;
            out.circuits_failed += tally.circuits_failed;
        }
        out
    }
}

pub fn run_simulation(sequence: &[ConsensusSnapshot], adversary: &AdversarySpec, config: SimulationConfig) -> Result<SimulationOutput> {
    Ok(Simulation::new(sequence, adversary, config)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{ExitPolicy, RelayEntry};

    fn trio() -> Vec<RelayEntry> {
        vec![
            RelayEntry::new("G", "g", 100).with_flags(["Guard"]).with_subnet(1, 1),
            RelayEntry::new("M", "m", 50).with_subnet(2, 2),
            RelayEntry::new("E", "e", 10)
                .with_flags(["Exit"])
                .with_policy(ExitPolicy::accept_all())
                .with_subnet(3, 3),
        ]
    }

    fn short(algorithm: Algorithm, clients: u64, seed: u64) -> SimulationConfig {
        let mut c = SimulationConfig::new(algorithm, clients, seed);
        c.end_time = Some(6000);
        c
    }

    #[test]
    fn forced_circuit() {
        let seq = [ConsensusSnapshot::new(0, trio()).unwrap()];
        let sim = Simulation::new(&seq, &AdversarySpec::none(), short(Algorithm::Abwrs, 1, 1)).unwrap();
        let mut seen = Vec::new();
        sim.run_client(0, |ev| seen.push(ev.outcome));
        assert_eq!(seen.len(), 10);
        assert!(seen
            .iter()
            .all(|o| *o == CircuitOutcome::Built(Circuit { guard: 0, middle: 1, exit: 2 })));
    }

    #[test]
    fn subnet_clash_fails_circuit() {
        let mut relays = trio();
        relays[1] = relays[1].clone().with_subnet(1, 1);
        let seq = [ConsensusSnapshot::new(0, relays).unwrap()];
        let out = run_simulation(&seq, &AdversarySpec::none(), short(Algorithm::Abwrs, 2, 1)).unwrap();
        assert_eq!(out.circuits_failed, 20);
        assert!(out.records.iter().all(|r| r.circuits_built == 0));
    }

    #[test]
    fn port_without_exit_is_skipped() {
        let seq = [ConsensusSnapshot::new(0, trio()).unwrap()];
        let mut cfg = short(Algorithm::Abwrs, 1, 1);
        cfg.activity.ports = vec![443, 25];
        let mut relays = trio();
        relays[2].exit_policy = "accept:443;reject:*".parse().unwrap();
        let seq2 = [ConsensusSnapshot::new(0, relays).unwrap()];
        let out = run_simulation(&seq2, &AdversarySpec::none(), cfg.clone()).unwrap();
        assert_eq!((out.streams_skipped, out.records[0].circuits_built), (5, 5));
        let out = run_simulation(&seq, &AdversarySpec::none(), cfg).unwrap();
        assert_eq!(out.streams_skipped, 0);
    }

    #[test]
    fn adversary_owning_all_ends() {
        let relays = vec![RelayEntry::new("M", "m", 50).with_subnet(2, 2)];
        let seq = [ConsensusSnapshot::new(0, relays).unwrap()];
        let adv = AdversarySpec::new(vec![
            AdversaryRelay::new(RoleHint::GuardLike, 100),
            AdversaryRelay::new(RoleHint::ExitLike, 10),
        ]);
        let out = run_simulation(&seq, &adv, short(Algorithm::Waterfilling, 5, 3)).unwrap();
        for r in &out.records {
            assert_eq!(r.first_compromise_time, Some(0));
            assert_eq!(r.circuits_compromised, r.circuits_built);
        }
    }

    #[test]
    fn no_adversary_no_compromise() {
        let seq = [ConsensusSnapshot::new(0, trio()).unwrap()];
        let out = run_simulation(&seq, &AdversarySpec::none(), short(Algorithm::Waterfilling, 5, 3)).unwrap();
        assert!(out.records.iter().all(|r| r.first_compromise_time.is_none()));
    }

    #[test]
    fn unordered_sequence_rejected() {
        let seq = [
            ConsensusSnapshot::new(10, trio()).unwrap(),
            ConsensusSnapshot::new(5, trio()).unwrap(),
        ];
        assert!(matches!(
            run_simulation(&seq, &AdversarySpec::none(), short(Algorithm::Abwrs, 1, 0)),
            Err(Error::InvalidInput(_))
        ));
        assert!(run_simulation(&[], &AdversarySpec::none(), short(Algorithm::Abwrs, 1, 0)).is_err());
    }

    #[test]
    fn unsupported_snapshot_is_named() {
        // G <= M with scarce exits.
        let relays = vec![
            RelayEntry::new("G", "g", 10).with_flags(["Guard"]),
            RelayEntry::new("M", "m", 100),
            RelayEntry::new("E", "e", 1).with_flags(["Exit"]).with_policy(ExitPolicy::accept_all()),
        ];
        let seq = [
            ConsensusSnapshot::new(0, trio()).unwrap(),
            ConsensusSnapshot::new(3600, relays).unwrap(),
        ];
        match run_simulation(&seq, &AdversarySpec::none(), short(Algorithm::Abwrs, 1, 0)) {
            Err(Error::UnsupportedCase(m)) => assert!(m.contains("snapshot 3600"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_use_injected_totals() {
        let snap = ConsensusSnapshot::new(0, trio()).unwrap();
        let adv = AdversarySpec::new(vec![AdversaryRelay::new(RoleHint::GuardLike, 40)]);
        let p = PreparedSnapshot::new(&snap, &adv, Algorithm::Abwrs, &[443]).unwrap();
        assert_eq!(p.snapshot().totals().g, snap.totals().g + 40);
        // Wgg = (G+M)/2G with the adversary counted in G.
        assert!((p.weights().wgg - 190.0 / 280.0).abs() < 1e-12);
    }

    #[test]
    fn guard_rotation_and_churn() {
        let mut relays = trio();
        relays.push(RelayEntry::new("G2", "g2", 300).with_flags(["Guard"]).with_subnet(4, 4));
        let first = ConsensusSnapshot::new(0, relays.clone()).unwrap();
        // G loses its flag in the second snapshot.
        relays[0].flags.clear();
        let second = ConsensusSnapshot::new(86_400, relays).unwrap();
        let mut cfg = SimulationConfig::new(Algorithm::Abwrs, 1, 9);
        cfg.num_entry_guards = 1;
        cfg.end_time = Some(2 * 86_400);
        let sim = Simulation::new(&[first, second], &AdversarySpec::none(), cfg).unwrap();
        let mut lists = Vec::new();
        sim.run_client(0, |ev| {
            lists.push((ev.stream.time, ev.guard_list.to_vec()));
        });
        for (t, list) in &lists {
            assert_eq!(list.len(), 1);
            let g = &list[0];
            assert!(g.rotation_deadline - g.chosen_at >= GUARD_LIFETIME.0);
            assert!(g.rotation_deadline - g.chosen_at <= GUARD_LIFETIME.1);
            if *t >= 86_400 {
                assert_eq!(g.fingerprint, "G2");
            }
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let seq = [ConsensusSnapshot::new(0, trio()).unwrap()];
        let adv = AdversarySpec::new(vec![AdversaryRelay::new(RoleHint::GuardLike, 100)]);
        let sim = Simulation::new(&seq, &adv, short(Algorithm::Waterfilling, 64, 42)).unwrap();
        let sequential: Vec<CompromiseRecord> = (0..64).map(|id| sim.run_client(id, |_| {}).0).collect();
        assert_eq!(sim.run().records, sequential);
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in [Algorithm::Abwrs, Algorithm::Waterfilling, Algorithm::WaterfillingGe] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        assert!("wf2".parse::<Algorithm>().is_err());
    }
}
