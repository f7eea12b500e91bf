use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::adversary::{AdversarySpec, InjectedSnapshot};
use super::Algorithm;
use crate::consensus::{ConsensusSnapshot, LoadCase};
use crate::error::{Error, Result};
use crate::selection::{Position, WeightTable};
use crate::waterfill::{solve_applicable, WaterfillSolution};
use crate::weights::{compute_weights, PositionWeights};

/// A snapshot with adversary relays merged in, its weights solved and the
/// per-position samplers built.
#[derive(Debug, Clone)]
pub struct PreparedSnapshot {
    snapshot: ConsensusSnapshot,
    is_adversary: Vec<bool>,
    case: LoadCase,
    weights: PositionWeights,
    solutions: Vec<WaterfillSolution>,
    entry: WeightedIndex<f64>,
    middle: WeightedIndex<f64>,
    exits: HashMap<u16, Option<WeightedIndex<f64>>>,
}

fn sampler(weights: Vec<f64>) -> Option<WeightedIndex<f64>> {
    WeightedIndex::new(weights).ok()
}

/// Prefixes string-carrying errors with the snapshot they came from.
fn in_snapshot(valid_after: i64, err: Error) -> Error {
    let tag = |m: String| format!("snapshot {valid_after}: {m}");
    match err {
        Error::DegenerateNetwork => Error::UnsupportedCase(tag("total consensus weight is zero".into())),
        Error::UnsupportedCase(m) => Error::UnsupportedCase(tag(m)),
        Error::Infeasible(m) => Error::Infeasible(tag(m)),
        Error::EmptyPool(m) => Error::EmptyPool(tag(m)),
        Error::InvalidInput(m) => Error::InvalidInput(tag(m)),
        Error::Invariant(m) => Error::Invariant(tag(m)),
        other => other,
    }
}

impl PreparedSnapshot {
    /// Injects `adversary`, then computes weights from the injected totals.
    /// Exit samplers are pre-built for `ports`; other ports are built on
    /// demand.
    pub fn new(snapshot: &ConsensusSnapshot, adversary: &AdversarySpec, algorithm: Algorithm, ports: &[u16]) -> Result<Self> {
        let va = snapshot.valid_after();
        let InjectedSnapshot { snapshot, is_adversary } = adversary.inject(snapshot).map_err(|e| in_snapshot(va, e))?;
        Self::from_injected(snapshot, is_adversary, algorithm, ports).map_err(|e| in_snapshot(va, e))
    }

    fn from_injected(snapshot: ConsensusSnapshot, is_adversary: Vec<bool>, algorithm: Algorithm, ports: &[u16]) -> Result<Self> {
        let case = snapshot.load_case()?;
        let weights = compute_weights(&snapshot.totals(), &case, algorithm.weight_mode())?;
        let solutions = solve_applicable(&snapshot, &weights, algorithm.target_pools())?;
        let table = WeightTable::new(&weights, &solutions);
        let entry = sampler(table.client_weights(&snapshot, Position::Entry, None))
            .ok_or_else(|| Error::EmptyPool("no relay is eligible for the entry position".into()))?;
        let middle = sampler(table.client_weights(&snapshot, Position::Middle, None))
            .ok_or_else(|| Error::EmptyPool("no relay is eligible for the middle position".into()))?;
        let exits = ports
            .iter()
            .map(|&p| (p, sampler(table.client_weights(&snapshot, Position::Exit, Some(p)))))
            .collect();
        Ok(PreparedSnapshot {
            snapshot,
            is_adversary,
            case,
            weights,
            solutions,
            entry,
            middle,
            exits,
        })
    }

    pub fn snapshot(&self) -> &ConsensusSnapshot {
        &self.snapshot
    }

    pub fn load_case(&self) -> &LoadCase {
        &self.case
    }

    pub fn weights(&self) -> &PositionWeights {
        &self.weights
    }

    pub fn solutions(&self) -> &[WaterfillSolution] {
        &self.solutions
    }

    pub fn is_adversary(&self, index: usize) -> bool {
        self.is_adversary[index]
    }

    pub(crate) fn sample_entry<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.entry.sample(rng)
    }

    pub(crate) fn sample_middle<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.middle.sample(rng)
    }

    /// `None` when no relay accepts `port`.
    pub(crate) fn sample_exit<R: Rng + ?Sized>(&self, port: u16, rng: &mut R) -> Option<usize> {
        match self.exits.get(&port) {
            Some(dist) => dist.as_ref().map(|d| d.sample(rng)),
            None => {
                let table = WeightTable::new(&self.weights, &self.solutions);
                sampler(table.client_weights(&self.snapshot, Position::Exit, Some(port))).map(|d| d.sample(rng))
            }
        }
    }
}
