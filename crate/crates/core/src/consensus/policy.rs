//! Port-only exit policies.
//!
//! Only the port dimension of a Tor exit policy is modelled: every rule
//! applies to the single wildcard address class. A policy always ends with a
//! rule covering every port, so [`ExitPolicy::accepts`] is total.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyAction {
    Accept,
    Reject,
}

impl PolicyAction {
    fn opposite(self) -> Self {
        match self {
            PolicyAction::Accept => PolicyAction::Reject,
            PolicyAction::Reject => PolicyAction::Accept,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            PolicyAction::Accept => "accept",
            PolicyAction::Reject => "reject",
        }
    }
}

impl FromStr for PolicyAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept" => Ok(PolicyAction::Accept),
            "reject" => Ok(PolicyAction::Reject),
            other => Err(format!("unknown policy action {other:?}")),
        }
    }
}

/// Inclusive port range within `1..=65535`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortRange {
    lo: u16,
    hi: u16,
}

impl PortRange {
    pub const ALL: PortRange = PortRange { lo: 1, hi: 65535 };

    pub fn new(lo: u16, hi: u16) -> Result<Self, String> {
        if lo == 0 || lo > hi {
            return Err(format!("invalid port range {lo}-{hi}"));
        }
        Ok(PortRange { lo, hi })
    }

    pub fn contains(&self, port: u16) -> bool {
        self.lo <= port && port <= self.hi
    }

    pub fn is_all(&self) -> bool {
        *self == Self::ALL
    }
}

impl fmt::Display for PortRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_all() {
            f.write_str("*")
        } else if self.lo == self.hi {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}-{}", self.lo, self.hi)
        }
    }
}

impl FromStr for PortRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            return Ok(PortRange::ALL);
        }
        let port = |p: &str| {
            p.parse::<u16>()
                .map_err(|_| format!("invalid port {p:?}"))
        };
        match s.split_once('-') {
            Some((lo, hi)) => PortRange::new(port(lo)?, port(hi)?),
            None => {
                let p = port(s)?;
                PortRange::new(p, p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PolicyRule {
    pub action: PolicyAction,
    pub ports: PortRange,
}

/// Ordered first-match rule list; the last rule always covers every port.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ExitPolicy {
    rules: Vec<PolicyRule>,
}

impl ExitPolicy {
    pub fn reject_all() -> Self {
        ExitPolicy {
            rules: vec![PolicyRule {
                action: PolicyAction::Reject,
                ports: PortRange::ALL,
            }],
        }
    }

    pub fn accept_all() -> Self {
        ExitPolicy {
            rules: vec![PolicyRule {
                action: PolicyAction::Accept,
                ports: PortRange::ALL,
            }],
        }
    }

    /// Builds a policy from explicit rules. When the final rule does not cover
    /// every port, a catch-all with the opposite action is appended, which
    /// matches how Tor reads policy summaries ("accept 80,443" rejects the
    /// rest, "reject 25" accepts the rest).
    pub fn from_rules(mut rules: Vec<PolicyRule>) -> Result<Self, String> {
        let last = *rules.last().ok_or("empty exit policy")?;
        if !last.ports.is_all() {
            rules.push(PolicyRule {
                action: last.action.opposite(),
                ports: PortRange::ALL,
            });
        }
        Ok(ExitPolicy { rules })
    }

    /// Parses a Tor `p` line body: `accept|reject <portlist>`.
    pub fn from_summary(action: &str, portlist: &str) -> Result<Self, String> {
        let action: PolicyAction = action.parse()?;
        let rules = parse_portlist(portlist)?
            .into_iter()
            .map(|ports| PolicyRule { action, ports })
            .collect();
        Self::from_rules(rules)
    }

    pub fn rules(&self) -> &[PolicyRule] {
        &self.rules
    }

    pub fn accepts(&self, port: u16) -> bool {
        self.rules
            .iter()
            .find(|r| r.ports.contains(port))
            .map(|r| r.action == PolicyAction::Accept)
            .unwrap_or(false)
    }

    /// True when at least one port is accepted.
    pub fn allows_any(&self) -> bool {
        self.rules.iter().any(|r| r.action == PolicyAction::Accept)
    }
}

impl Default for ExitPolicy {
    fn default() -> Self {
        Self::reject_all()
    }
}

fn parse_portlist(list: &str) -> Result<Vec<PortRange>, String> {
    if list.is_empty() {
        return Err("empty port list".into());
    }
    list.split(',').map(str::parse).collect()
}

impl fmt::Display for ExitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, rule) in self.rules.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{}:{}", rule.action.as_str(), rule.ports)?;
        }
        Ok(())
    }
}

/// Native form: `accept:80,443;reject:*`.
impl FromStr for ExitPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut rules = Vec::new();
        for segment in s.split(';') {
            let (action, ports) = segment
                .split_once(':')
                .ok_or_else(|| format!("policy segment {segment:?} lacks ':'"))?;
            let action: PolicyAction = action.parse()?;
            for ports in parse_portlist(ports)? {
                rules.push(PolicyRule { action, ports });
            }
        }
        Self::from_rules(rules)
    }
}

impl TryFrom<String> for ExitPolicy {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ExitPolicy> for String {
    fn from(p: ExitPolicy) -> String {
        p.to_string()
    }
}
