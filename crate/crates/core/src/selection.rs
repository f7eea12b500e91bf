//! Client-side selection probabilities per circuit position.
//!
//! A relay's client weight at a position is its consensus weight times the
//! positional weight for its class, or times its own solved weight when a
//! waterfilling solution covers it. Probabilities are client weights
//! normalized over the eligible relays.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusSnapshot, RelayClass, RelayEntry};
use crate::error::{Error, Result};
use crate::waterfill::{RelayWaterWeight, WaterfillSolution};
use crate::weights::PositionWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Entry,
    Middle,
    Exit,
}

/// Scalar weights plus any per-relay waterfilling overrides.
#[derive(Debug, Clone)]
pub struct WeightTable<'a> {
    scalar: &'a PositionWeights,
    overrides: HashMap<&'a str, &'a RelayWaterWeight>,
}

impl<'a> WeightTable<'a> {
    pub fn new(scalar: &'a PositionWeights, solutions: &'a [WaterfillSolution]) -> Self {
        let overrides = solutions
            .iter()
            .flat_map(|s| s.per_relay.iter())
            .map(|r| (r.fingerprint.as_str(), r))
            .collect();
        WeightTable { scalar, overrides }
    }

    /// Positional weight `W_pf` of `relay`; 0 where the relay cannot serve.
    pub fn position_weight(&self, relay: &RelayEntry, position: Position) -> f64 {
        let w = self.scalar;
        let class = relay.class();
        if let Some(o) = self.overrides.get(relay.fingerprint.as_str()) {
            return match position {
                Position::Entry => o.guard,
                Position::Middle => o.middle,
                Position::Exit if class == RelayClass::GuardExit => o.exit,
                Position::Exit => 0.0,
            };
        }
        match (position, class) {
            (Position::Entry, RelayClass::Guard) => w.wgg,
            (Position::Entry, RelayClass::GuardExit) => w.wgd,
            (Position::Entry, _) => 0.0,
            (Position::Middle, RelayClass::Guard) => w.wmg,
            (Position::Middle, RelayClass::Middle) => 1.0,
            (Position::Middle, RelayClass::Exit) => w.wme,
            (Position::Middle, RelayClass::GuardExit) => w.wmd,
            (Position::Exit, RelayClass::Exit) => w.wee,
            (Position::Exit, RelayClass::GuardExit) => w.wed,
            (Position::Exit, _) => 0.0,
        }
    }

    /// Client weights for every relay of `snapshot`, in snapshot order. At
    /// the exit position relays whose policy rejects `port` get 0; `None`
    /// disables policy filtering.
    pub fn client_weights(&self, snapshot: &ConsensusSnapshot, position: Position, port: Option<u16>) -> Vec<f64> {
        snapshot
            .relays()
            .iter()
            .map(|r| {
                if position == Position::Exit {
                    if let Some(port) = port {
                        if !r.exit_policy.accepts(port) {
                            return 0.0;
                        }
                    }
                }
                r.consensus_weight as f64 * self.position_weight(r, position)
            })
            .collect()
    }
}

/// Selection probabilities over the relays with positive client weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    pub fingerprints: Vec<String>,
    /// Indices into the snapshot's relay list.
    pub indices: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl ProbabilityVector {
    pub fn from_weights(snapshot: &ConsensusSnapshot, weights: &[f64]) -> Option<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut out = ProbabilityVector {
            fingerprints: Vec::new(),
            indices: Vec::new(),
            probabilities: Vec::new(),
        };
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                out.fingerprints.push(snapshot.relays()[i].fingerprint.clone());
                out.indices.push(i);
                out.probabilities.push(w / total);
            }
        }
        Some(out)
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probability_of(&self, fingerprint: &str) -> f64 {
        self.fingerprints
            .iter()
            .position(|f| f == fingerprint)
            .map(|i| self.probabilities[i])
            .unwrap_or(0.0)
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        crate::metrics::shannon_entropy(&self.probabilities)
    }
}

/// Selection distribution at `position`, using waterfilled per-relay weights
/// for relays covered by `solutions` and the scalar weights elsewhere.
pub fn selection_distribution(
    snapshot: &ConsensusSnapshot,
    weights: &PositionWeights,
    solutions: &[WaterfillSolution],
    position: Position,
    port: Option<u16>,
) -> Result<ProbabilityVector> {
    let table = WeightTable::new(weights, solutions);
    let client = table.client_weights(snapshot, position, port);
    ProbabilityVector::from_weights(snapshot, &client).ok_or_else(|| {
        Error::EmptyPool(match port {
            Some(port) if position == Position::Exit => format!("no exit relay accepts port {port}"),
            _ => format!("no eligible relay for the {position:?} position"),
        })
    })
}
