//! Subset reader for Tor v3 network-status consensus documents.
//!
//! Only the lines needed for path selection are interpreted:
//!
//! ```text
//! valid-after 2015-05-25 09:00:00
//! r <nickname> <identity> [<digest>] <date> <time> <ip> <orport> <dirport>
//! s <flag>...
//! w Bandwidth=<n> [...]
//! p accept|reject <portlist>
//! ```
//!
//! Every other line is ignored. A router without a `w` line gets weight 0
//! and a [`ParseWarning`]; a router without a `p` line rejects every port.

use std::net::Ipv4Addr;

use chrono::NaiveDateTime;
use serde::Serialize;

use super::{ConsensusSnapshot, ExitPolicy, Flag, RelayEntry, Subnet16};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct V3Document {
    pub snapshot: ConsensusSnapshot,
    pub warnings: Vec<ParseWarning>,
}

struct PendingRouter {
    relay: RelayEntry,
    line: usize,
    has_weight: bool,
}

pub fn parse_v3_subset(text: &str) -> Result<V3Document> {
    let mut valid_after = None;
    let mut relays = Vec::new();
    let mut positions = Vec::new();
    let mut warnings = Vec::new();
    let mut current: Option<PendingRouter> = None;

    let mut finish = |router: PendingRouter, relays: &mut Vec<RelayEntry>, warnings: &mut Vec<ParseWarning>| {
        if !router.has_weight {
            warnings.push(ParseWarning {
                line: router.line,
                message: format!(
                    "router {} has no Bandwidth weight; using 0",
                    router.relay.fingerprint
                ),
            });
        }
        positions.push(router.line);
        relays.push(router.relay);
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut tokens = raw.split_whitespace();
        let Some(keyword) = tokens.next() else { continue };
        let args: Vec<&str> = tokens.collect();
        match keyword {
            "valid-after" => {
                if valid_after.is_some() {
                    return Err(Error::parse(lineno, "duplicate valid-after line"));
                }
                valid_after = Some(parse_timestamp(&args, lineno)?);
            }
            "r" => {
                if let Some(router) = current.take() {
                    finish(router, &mut relays, &mut warnings);
                }
                current = Some(PendingRouter {
                    relay: parse_router_line(&args, lineno)?,
                    line: lineno,
                    has_weight: false,
                });
            }
            "s" | "w" | "p" => {
                let router = current
                    .as_mut()
                    .ok_or_else(|| Error::parse(lineno, format!("{keyword:?} line outside a router entry")))?;
                match keyword {
                    "s" => router.relay.flags = args.iter().copied().map(Flag::from).collect(),
                    "w" => {
                        if let Some(bw) = parse_bandwidth(&args, lineno)? {
                            router.relay.consensus_weight = bw;
                            router.has_weight = true;
                        }
                    }
                    _ => {
                        let [action, ports] = args[..] else {
                            return Err(Error::parse(lineno, "p line needs <accept|reject> <portlist>"));
                        };
                        router.relay.exit_policy = ExitPolicy::from_summary(action, ports)
                            .map_err(|m| Error::parse(lineno, m))?;
                    }
                }
            }
            "directory-footer" => {
                if let Some(router) = current.take() {
                    finish(router, &mut relays, &mut warnings);
                }
            }
            _ => {}
        }
    }
    if let Some(router) = current.take() {
        finish(router, &mut relays, &mut warnings);
    }

    let valid_after = valid_after.ok_or(Error::MissingValidAfter)?;
    let snapshot = ConsensusSnapshot::with_positions(valid_after, relays, &positions)?;
    Ok(V3Document { snapshot, warnings })
}

fn parse_timestamp(args: &[&str], lineno: usize) -> Result<i64> {
    match args {
        [secs] => secs
            .parse::<i64>()
            .map_err(|_| Error::parse(lineno, format!("invalid timestamp {secs:?}"))),
        [date, time] => NaiveDateTime::parse_from_str(&format!("{date} {time}"), "%Y-%m-%d %H:%M:%S")
            .map(|dt| dt.and_utc().timestamp())
            .map_err(|e| Error::parse(lineno, format!("invalid timestamp: {e}"))),
        _ => Err(Error::parse(lineno, "valid-after needs <YYYY-MM-DD HH:MM:SS>")),
    }
}

/// `r` carries 8 fields in the full flavour and 7 in the microdesc flavour
/// (no descriptor digest).
fn parse_router_line(args: &[&str], lineno: usize) -> Result<RelayEntry> {
    let (nickname, identity, ip) = match args.len() {
        8 => (args[0], args[1], args[5]),
        7 => (args[0], args[1], args[4]),
        n => {
            return Err(Error::parse(
                lineno,
                format!("r line has {n} fields, expected 7 or 8"),
            ))
        }
    };
    let addr: Ipv4Addr = ip
        .parse()
        .map_err(|_| Error::parse(lineno, format!("invalid IPv4 address {ip:?}")))?;
    let octets = addr.octets();
    let mut relay = RelayEntry::new(identity, nickname, 0);
    relay.subnet16 = Some(Subnet16([octets[0], octets[1]]));
    Ok(relay)
}

fn parse_bandwidth(args: &[&str], lineno: usize) -> Result<Option<u64>> {
    for arg in args {
        if let Some(value) = arg.strip_prefix("Bandwidth=") {
            let bw = value
                .parse::<u64>()
                .map_err(|_| Error::parse(lineno, format!("invalid Bandwidth {value:?}")))?;
            return Ok(Some(bw));
        }
    }
    Ok(None)
}
