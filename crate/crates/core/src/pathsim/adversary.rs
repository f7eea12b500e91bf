//! Relay adversaries.
//!
//! Adversary relays are merged into every snapshot in which they are live
//! *before* pool totals and positional weights are computed, so the weights
//! account for the adversary's bandwidth.
//!
//! JSON schema (`adv.json`):
//!
//! ```json
//! {
//!   "relays": [
//!     { "role": "guard-like", "consensus_weight": 480310 },
//!     { "role": "exit-like", "consensus_weight": 20000, "fingerprint": "EVIL-EXIT",
//!       "flags": ["Exit", "Fast"], "exit_policy": "accept:443;reject:*",
//!       "join_time": 1420070400, "subnet16": "10.99" }
//!   ]
//! }
//! ```
//!
//! Omitted fields default by role: guard-like relays carry
//! `Guard,Fast,Stable,Running,Valid` and reject every port; exit-like relays
//! carry `Exit,Fast,Running,Valid` and accept every port. Fingerprints
//! default to `ADV0000`, `ADV0001`, ... by position, `join_time` to "always
//! live", and no subnet or family is declared.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusSnapshot, ExitPolicy, Flag, RelayEntry, Subnet16};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleHint {
    GuardLike,
    ExitLike,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionMode {
    /// Adversary bandwidth enters the pool totals before weights are
    /// computed. The only supported mode.
    #[default]
    RecomputeWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryRelay {
    pub role: RoleHint,
    pub consensus_weight: u64,
    #[serde(default)]
    pub fingerprint: Option<String>,
    #[serde(default)]
    pub nickname: Option<String>,
    #[serde(default)]
    pub flags: Option<BTreeSet<Flag>>,
    #[serde(default)]
    pub exit_policy: Option<ExitPolicy>,
    #[serde(default = "always")]
    pub join_time: i64,
    #[serde(default)]
    pub subnet16: Option<Subnet16>,
    #[serde(default)]
    pub family: BTreeSet<String>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub as_number: Option<u32>,
}

fn always() -> i64 {
    i64::MIN
}

impl AdversaryRelay {
    pub fn new(role: RoleHint, consensus_weight: u64) -> Self {
        AdversaryRelay {
            role,
            consensus_weight,
            fingerprint: None,
            nickname: None,
            flags: None,
            exit_policy: None,
            join_time: always(),
            subnet16: None,
            family: BTreeSet::new(),
            country: None,
            as_number: None,
        }
    }

    pub fn with_fingerprint(mut self, fp: impl Into<String>) -> Self {
        self.fingerprint = Some(fp.into());
        self
    }

    pub fn joining_at(mut self, t: i64) -> Self {
        self.join_time = t;
        self
    }

    fn to_entry(&self, position: usize) -> RelayEntry {
        let fingerprint = self
            .fingerprint
            .clone()
            .unwrap_or_else(|| format!("ADV{position:04}"));
        let nickname = self.nickname.clone().unwrap_or_else(|| fingerprint.clone());
        let (default_flags, default_policy): (&[&str], ExitPolicy) = match self.role {
            RoleHint::GuardLike => (
                &["Guard", "Fast", "Stable", "Running", "Valid"],
                ExitPolicy::reject_all(),
            ),
            RoleHint::ExitLike => (&["Exit", "Fast", "Running", "Valid"], ExitPolicy::accept_all()),
        };
        let mut entry = RelayEntry::new(fingerprint, nickname, self.consensus_weight);
        entry.flags = self
            .flags
            .clone()
            .unwrap_or_else(|| default_flags.iter().map(|&f| Flag::from(f)).collect());
        entry.exit_policy = self.exit_policy.clone().unwrap_or(default_policy);
        entry.family = self.family.clone();
        entry.subnet16 = self.subnet16;
        entry.country = self.country.clone();
        entry.as_number = self.as_number;
        entry
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub relays: Vec<AdversaryRelay>,
    #[serde(default)]
    pub injection: InjectionMode,
}

/// A snapshot with the live adversary relays merged in.
#[derive(Debug, Clone)]
pub struct InjectedSnapshot {
    pub snapshot: ConsensusSnapshot,
    /// `is_adversary[i]` for every relay index of `snapshot`.
    pub is_adversary: Vec<bool>,
}

impl AdversarySpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(relays: Vec<AdversaryRelay>) -> Self {
        AdversarySpec {
            relays,
            injection: InjectionMode::RecomputeWeights,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: AdversarySpec = serde_json::from_str(text)?;
        let mut seen = HashSet::new();
        for entry in spec.entries() {
            if !seen.insert(entry.fingerprint.clone()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate adversary fingerprint {}",
                    entry.fingerprint
                )));
            }
        }
        Ok(spec)
    }

    /// Resolved relay entries, in declaration order.
    pub fn entries(&self) -> Vec<RelayEntry> {
        self.relays.iter().enumerate().map(|(i, r)| r.to_entry(i)).collect()
    }

    pub fn fingerprints(&self) -> HashSet<String> {
        self.entries().into_iter().map(|e| e.fingerprint).collect()
    }

    /// Merges the relays live at `snapshot.valid_after()`; pool totals of the
    /// result include their consensus weight.
    pub fn inject(&self, snapshot: &ConsensusSnapshot) -> Result<InjectedSnapshot> {
        let now = snapshot.valid_after();
        let live: Vec<RelayEntry> = self
            .relays
            .iter()
            .enumerate()
            .filter(|(_, r)| r.join_time <= now)
            .map(|(i, r)| r.to_entry(i))
            .collect();
        let fingerprints: HashSet<&str> = live.iter().map(|r| r.fingerprint.as_str()).collect();
        if let Some(clash) = snapshot.relays().iter().find(|r| fingerprints.contains(r.fingerprint.as_str())) {
            return Err(Error::InvalidInput(format!(
                "adversary fingerprint {} already present in snapshot {}",
                clash.fingerprint, now
            )));
        }
        let honest = snapshot.len();
        let merged = snapshot.with_added_relays(live)?;
        let is_adversary = (0..merged.len()).map(|i| i >= honest).collect();
        Ok(InjectedSnapshot {
            snapshot: merged,
            is_adversary,
        })
    }
}
