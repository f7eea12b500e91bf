use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{ConsensusSnapshot, ExitPolicy, Flag, RelayEntry, Subnet16};
use crate::error::{Error, Result};

/// Parses the native line format. Blank lines and `#` comments are skipped;
/// the first remaining line must be `snapshot <valid_after>`.
pub fn parse_native(text: &str) -> Result<ConsensusSnapshot> {
    let mut valid_after = None;
    let mut relays = Vec::new();
    let mut positions = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or_default();
        match (keyword, valid_after) {
            ("snapshot", None) => {
                let value = tokens
                    .next()
                    .ok_or_else(|| Error::parse(lineno, "snapshot line lacks a timestamp"))?;
                let ts = value
                    .parse::<i64>()
                    .map_err(|_| Error::parse(lineno, format!("invalid timestamp {value:?}")))?;
                if tokens.next().is_some() {
                    return Err(Error::parse(lineno, "trailing tokens after timestamp"));
                }
                valid_after = Some(ts);
            }
            ("snapshot", Some(_)) => {
                return Err(Error::parse(lineno, "duplicate snapshot header"));
            }
            ("relay", Some(_)) => {
                relays.push(parse_relay(tokens, lineno)?);
                positions.push(lineno);
            }
            ("relay", None) => {
                return Err(Error::parse(lineno, "relay line before snapshot header"));
            }
            (other, _) => {
                return Err(Error::parse(lineno, format!("unknown keyword {other:?}")));
            }
        }
    }

    let valid_after =
        valid_after.ok_or_else(|| Error::parse(text.lines().count().max(1), "missing snapshot header"))?;
    ConsensusSnapshot::with_positions(valid_after, relays, &positions)
}

fn parse_relay<'a>(mut tokens: impl Iterator<Item = &'a str>, lineno: usize) -> Result<RelayEntry> {
    let mut positional = || {
        tokens
            .next()
            .ok_or_else(|| Error::parse(lineno, "relay line needs <fingerprint> <nickname> <weight>"))
    };
    let fingerprint = positional()?;
    let nickname = positional()?;
    let weight = positional()?;
    if fingerprint.contains('=') || nickname.contains('=') {
        return Err(Error::parse(lineno, "relay line needs <fingerprint> <nickname> <weight>"));
    }
    let weight = weight
        .parse::<u64>()
        .map_err(|_| Error::parse(lineno, format!("invalid consensus weight {weight:?}")))?;
    let mut relay = RelayEntry::new(fingerprint, nickname, weight);

    let mut seen = BTreeSet::new();
    for field in tokens {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(lineno, format!("expected key=value, got {field:?}")))?;
        if !seen.insert(key) {
            return Err(Error::parse(lineno, format!("duplicate field {key:?}")));
        }
        let bad = |msg: String| Error::parse(lineno, msg);
        match key {
            "flags" => {
                relay.flags = split_list(value).map(Flag::from).collect();
            }
            "policy" => {
                relay.exit_policy = value.parse::<ExitPolicy>().map_err(bad)?;
            }
            "family" => {
                relay.family = split_list(value).map(str::to_string).collect();
            }
            "subnet" => {
                relay.subnet16 = Some(value.parse::<Subnet16>().map_err(bad)?);
            }
            "country" => {
                if value.len() != 2 || !value.chars().all(|c| c.is_ascii_alphabetic()) {
                    return Err(bad(format!("country {value:?} is not a 2-letter code")));
                }
                relay.country = Some(value.to_string());
            }
            "as" => {
                let asn = value
                    .parse::<u32>()
                    .map_err(|_| bad(format!("invalid AS number {value:?}")))?;
                relay.as_number = Some(asn);
            }
            other => return Err(bad(format!("unknown field {other:?}"))),
        }
    }
    Ok(relay)
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').filter(|s| !s.is_empty())
}

/// Renders a snapshot in the native format. Parsing the output yields an
/// equal snapshot.
pub fn serialize_native(snapshot: &ConsensusSnapshot) -> String {
    let mut out = format!("snapshot {}\n", snapshot.valid_after());
    for r in snapshot.relays() {
        let flags: Vec<String> = r.flags.iter().map(Flag::to_string).collect();
        let _ = write!(
            out,
            "relay {} {} {} flags={} policy={}",
            r.fingerprint,
            r.nickname,
            r.consensus_weight,
            flags.join(","),
            r.exit_policy
        );
        if !r.family.is_empty() {
            let family: Vec<&str> = r.family.iter().map(String::as_str).collect();
            let _ = write!(out, " family={}", family.join(","));
        }
        if let Some(subnet) = r.subnet16 {
            let _ = write!(out, " subnet={subnet}");
        }
        if let Some(cc) = &r.country {
            let _ = write!(out, " country={cc}");
        }
        if let Some(asn) = r.as_number {
            let _ = write!(out, " as={asn}");
        }
        out.push('\n');
    }
    out
}
