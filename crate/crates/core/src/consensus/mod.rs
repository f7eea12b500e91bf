//! Consensus snapshots: relays, pool totals and network-load classification.
//!
//! Two input formats are supported:
//!
//! - the native line format ([`parse_native`] / [`serialize_native`]):
//!
//!   ```text
//!   snapshot 1432544400
//!   relay AAAA guard1 6000 flags=Guard,Fast policy=reject:* subnet=10.1 country=de as=3320
//!   relay BBBB exit1 2500 flags=Exit policy=accept:80,443;reject:* family=CCCC
//!   ```
//!
//! - a subset of Tor v3 network-status documents ([`parse_v3_subset`]),
//!   reading only the `valid-after`, `r`, `s`, `w` and `p` lines.
//!
//! Snapshots are immutable once built. Their JSON rendering has a stable key
//! order and is validated on load: stored pool totals must match the relays.

mod native;
mod policy;
mod v3;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use native::{parse_native, serialize_native};
pub use policy::{ExitPolicy, PolicyAction, PolicyRule, PortRange};
pub use v3::{parse_v3_subset, ParseWarning, V3Document};

/// Relay status flag. Flags outside the known set are carried verbatim and
/// ignored by every computation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Flag {
    Guard,
    Exit,
    Fast,
    Stable,
    Running,
    Valid,
    Other(String),
}

impl From<&str> for Flag {
    fn from(s: &str) -> Self {
        match s {
            "Guard" => Flag::Guard,
            "Exit" => Flag::Exit,
            "Fast" => Flag::Fast,
            "Stable" => Flag::Stable,
            "Running" => Flag::Running,
            "Valid" => Flag::Valid,
            other => Flag::Other(other.to_string()),
        }
    }
}

impl From<String> for Flag {
    fn from(s: String) -> Self {
        Flag::from(s.as_str())
    }
}

impl From<Flag> for String {
    fn from(f: Flag) -> String {
        f.to_string()
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Flag::Guard => "Guard",
            Flag::Exit => "Exit",
            Flag::Fast => "Fast",
            Flag::Stable => "Stable",
            Flag::Running => "Running",
            Flag::Valid => "Valid",
            Flag::Other(s) => s,
        };
        f.write_str(s)
    }
}

/// First two octets of a relay's IPv4 address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Subnet16(pub [u8; 2]);

impl fmt::Display for Subnet16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0[0], self.0[1])
    }
}

impl FromStr for Subnet16 {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('.')
            .ok_or_else(|| format!("subnet {s:?} is not of the form a.b"))?;
        let octet = |x: &str| x.parse::<u8>().map_err(|_| format!("invalid octet {x:?}"));
        Ok(Subnet16([octet(a)?, octet(b)?]))
    }
}

impl TryFrom<String> for Subnet16 {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Subnet16> for String {
    fn from(s: Subnet16) -> String {
        s.to_string()
    }
}

/// Which pool a relay's consensus weight is accounted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelayClass {
    /// Guard and not Exit (`G`).
    Guard,
    /// Neither flag (`M`).
    Middle,
    /// Exit and not Guard (`E`).
    Exit,
    /// Guard and Exit (`D`).
    GuardExit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayEntry {
    pub fingerprint: String,
    pub nickname: String,
    pub consensus_weight: u64,
    pub flags: BTreeSet<Flag>,
    pub exit_policy: ExitPolicy,
    #[serde(default)]
    pub family: BTreeSet<String>,
    #[serde(default)]
    pub subnet16: Option<Subnet16>,
    #[serde(default)]
    pub country: Option<String>,
    #[serde(default)]
    pub as_number: Option<u32>,
}

impl RelayEntry {
    /// A relay with no flags, a reject-all policy and no metadata.
    pub fn new(fingerprint: impl Into<String>, nickname: impl Into<String>, weight: u64) -> Self {
        RelayEntry {
            fingerprint: fingerprint.into(),
            nickname: nickname.into(),
            consensus_weight: weight,
            flags: BTreeSet::new(),
            exit_policy: ExitPolicy::reject_all(),
            family: BTreeSet::new(),
            subnet16: None,
            country: None,
            as_number: None,
        }
    }

    pub fn with_flags<I, F>(mut self, flags: I) -> Self
    where
        I: IntoIterator<Item = F>,
        F: Into<Flag>,
    {
        self.flags.extend(flags.into_iter().map(Into::into));
        self
    }

    pub fn with_policy(mut self, policy: ExitPolicy) -> Self {
        self.exit_policy = policy;
        self
    }

    pub fn with_subnet(mut self, a: u8, b: u8) -> Self {
        self.subnet16 = Some(Subnet16([a, b]));
        self
    }

    pub fn with_family<I, S>(mut self, family: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.family.extend(family.into_iter().map(Into::into));
        self
    }

    pub fn has_flag(&self, flag: &Flag) -> bool {
        self.flags.contains(flag)
    }

    pub fn is_guard(&self) -> bool {
        self.has_flag(&Flag::Guard)
    }

    pub fn is_exit(&self) -> bool {
        self.has_flag(&Flag::Exit)
    }

    pub fn class(&self) -> RelayClass {
        match (self.is_guard(), self.is_exit()) {
            (true, false) => RelayClass::Guard,
            (false, false) => RelayClass::Middle,
            (false, true) => RelayClass::Exit,
            (true, true) => RelayClass::GuardExit,
        }
    }

    /// Whether the two relays may not appear in the same circuit: same
    /// identity, either lists the other as family, or same /16.
    pub fn conflicts_with(&self, other: &RelayEntry) -> bool {
        self.fingerprint == other.fingerprint
            || self.family.contains(&other.fingerprint)
            || other.family.contains(&self.fingerprint)
            || matches!((self.subnet16, other.subnet16), (Some(a), Some(b)) if a == b)
    }
}

/// Consensus-weight sums per pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolTotals {
    #[serde(rename = "G")]
    pub g: u64,
    #[serde(rename = "M")]
    pub m: u64,
    #[serde(rename = "E")]
    pub e: u64,
    #[serde(rename = "D")]
    pub d: u64,
}

impl PoolTotals {
    pub fn new(g: u64, m: u64, e: u64, d: u64) -> Self {
        PoolTotals { g, m, e, d }
    }

    pub fn from_relays<'a>(relays: impl IntoIterator<Item = &'a RelayEntry>) -> Self {
        let mut totals = PoolTotals::default();
        for relay in relays {
            totals.add(relay.class(), relay.consensus_weight);
        }
        totals
    }

    pub fn add(&mut self, class: RelayClass, weight: u64) {
        let slot = match class {
            RelayClass::Guard => &mut self.g,
            RelayClass::Middle => &mut self.m,
            RelayClass::Exit => &mut self.e,
            RelayClass::GuardExit => &mut self.d,
        };
        *slot += weight;
    }

    pub fn t(&self) -> u64 {
        self.g + self.m + self.e + self.d
    }

    pub fn of(&self, class: RelayClass) -> u64 {
        match class {
            RelayClass::Guard => self.g,
            RelayClass::Middle => self.m,
            RelayClass::Exit => self.e,
            RelayClass::GuardExit => self.d,
        }
    }
}

/// Network-load regime selecting which weight formulas apply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadCase {
    #[serde(rename = "balanced")]
    Balanced,
    /// Exits scarce even with Guard+Exit relays, and G > M.
    #[serde(rename = "3aE=SG>M")]
    Case3aESgtM,
    /// Exits scarce, but Guard+Exit relays lift the exit side to T/3.
    #[serde(rename = "3bE=S")]
    Case3bES,
    #[serde(rename = "unsupported")]
    Unsupported(String),
}

impl LoadCase {
    pub fn name(&self) -> &str {
        match self {
            LoadCase::Balanced => "balanced",
            LoadCase::Case3aESgtM => "3aE=SG>M",
            LoadCase::Case3bES => "3bE=S",
            LoadCase::Unsupported(reason) => reason,
        }
    }
}

impl fmt::Display for LoadCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadCase::Unsupported(reason) => write!(f, "unsupported ({reason})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Classifies pool totals into a network-load case. Comparisons against
/// `T/3` are done exactly in integers.
pub fn classify_load_case(totals: &PoolTotals) -> Result<LoadCase> {
    let t = totals.t() as u128;
    if t == 0 {
        return Err(Error::DegenerateNetwork);
    }
    let (g, m, e, d) = (
        totals.g as u128,
        totals.m as u128,
        totals.e as u128,
        totals.d as u128,
    );
    let case = if 3 * (e + d) < t {
        if g > m {
            LoadCase::Case3aESgtM
        } else {
            LoadCase::Unsupported("exit scarce with E+D < T/3 and G <= M".into())
        }
    } else if 3 * e < t {
        LoadCase::Case3bES
    } else if 3 * g >= t {
        LoadCase::Balanced
    } else {
        LoadCase::Unsupported("guard scarce with E >= T/3 and G < T/3".into())
    };
    Ok(case)
}

/// An immutable, validated consensus snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSnapshot")]
pub struct ConsensusSnapshot {
    valid_after: i64,
    relays: Vec<RelayEntry>,
    totals: PoolTotals,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct RawSnapshot {
    valid_after: i64,
    relays: Vec<RelayEntry>,
    totals: PoolTotals,
}

impl TryFrom<RawSnapshot> for ConsensusSnapshot {
    type Error = Error;

    fn try_from(raw: RawSnapshot) -> Result<Self> {
        let snapshot = ConsensusSnapshot::new(raw.valid_after, raw.relays)?;
        if snapshot.totals != raw.totals {
            return Err(Error::InvalidInput(format!(
                "stored totals {:?} do not match relays {:?}",
                raw.totals, snapshot.totals
            )));
        }
        Ok(snapshot)
    }
}

impl ConsensusSnapshot {
    /// Builds a snapshot, computing totals and rejecting duplicate
    /// fingerprints (positions reported 1-based).
    pub fn new(valid_after: i64, relays: Vec<RelayEntry>) -> Result<Self> {
        let positions: Vec<usize> = (1..=relays.len()).collect();
        Self::with_positions(valid_after, relays, &positions)
    }

    /// Like [`ConsensusSnapshot::new`], reporting duplicates with the given
    /// source positions (document line numbers).
    pub(crate) fn with_positions(
        valid_after: i64,
        relays: Vec<RelayEntry>,
        positions: &[usize],
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(relays.len());
        for (i, relay) in relays.iter().enumerate() {
            if let Some(&first) = index.get(&relay.fingerprint) {
                return Err(Error::DuplicateFingerprint {
                    fingerprint: relay.fingerprint.clone(),
                    first_line: positions[first],
                    second_line: positions[i],
                });
            }
            index.insert(relay.fingerprint.clone(), i);
        }
        let totals = PoolTotals::from_relays(&relays);
        Ok(ConsensusSnapshot {
            valid_after,
            relays,
            totals,
            index,
        })
    }

    pub fn valid_after(&self) -> i64 {
        self.valid_after
    }

    pub fn relays(&self) -> &[RelayEntry] {
        &self.relays
    }

    pub fn totals(&self) -> PoolTotals {
        self.totals
    }

    pub fn len(&self) -> usize {
        self.relays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relays.is_empty()
    }

    pub fn index_of(&self, fingerprint: &str) -> Option<usize> {
        self.index.get(fingerprint).copied()
    }

    pub fn get(&self, fingerprint: &str) -> Option<&RelayEntry> {
        self.index_of(fingerprint).map(|i| &self.relays[i])
    }

    pub fn load_case(&self) -> Result<LoadCase> {
        classify_load_case(&self.totals)
    }

    /// Returns a new snapshot with `extra` relays appended and totals
    /// recomputed over the union.
    pub fn with_added_relays(&self, extra: impl IntoIterator<Item = RelayEntry>) -> Result<Self> {
        let mut relays = self.relays.clone();
        relays.extend(extra);
        Self::new(self.valid_after, relays)
    }

    /// Canonical JSON rendering (stable key order, trailing newline).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSnapshot = serde_json::from_str(text)?;
        Self::try_from(raw)
    }
}
