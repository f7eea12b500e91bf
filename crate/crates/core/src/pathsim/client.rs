use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prepared::PreparedSnapshot;
use super::schedule::StreamSpec;
use crate::selection::Position;

pub const DEFAULT_NUM_ENTRY_GUARDS: usize = 3;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 64;
/// Bounds of a guard's lifetime, in seconds (60 and 90 days).
pub const GUARD_LIFETIME: (i64, i64) = (60 * 86_400, 90 * 86_400);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardEntry {
    pub fingerprint: String,
    pub chosen_at: i64,
    pub rotation_deadline: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientState {
    pub guard_list: Vec<GuardEntry>,
    pub num_entry_guards: usize,
    pub rng_seed: u64,
}

impl ClientState {
    pub fn new(num_entry_guards: usize, rng_seed: u64) -> Self {
        ClientState {
            guard_list: Vec::with_capacity(num_entry_guards),
            num_entry_guards,
            rng_seed,
        }
    }

    /// Drops expired guards and guards that are absent or unflagged in
    /// `prepared`, then refills from the entry distribution.
    pub fn maintain_guards<R: Rng + ?Sized>(&mut self, prepared: &PreparedSnapshot, now: i64, rng: &mut R, max_attempts: u32) {
        let snapshot = prepared.snapshot();
        self.guard_list.retain(|g| {
            g.rotation_deadline > now && snapshot.get(&g.fingerprint).is_some_and(|r| r.is_guard())
        });
        let mut budget = max_attempts as usize * self.num_entry_guards;
        while self.guard_list.len() < self.num_entry_guards && budget > 0 {
            budget -= 1;
            let relay = &snapshot.relays()[prepared.sample_entry(rng)];
            if self.guard_list.iter().any(|g| g.fingerprint == relay.fingerprint) {
                continue;
            }
            self.guard_list.push(GuardEntry {
                fingerprint: relay.fingerprint.clone(),
                chosen_at: now,
                rotation_deadline: now + rng.gen_range(GUARD_LIFETIME.0..=GUARD_LIFETIME.1),
            });
        }
    }
}

/// Relay indices into the prepared snapshot's relay list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub guard: usize,
    pub middle: usize,
    pub exit: usize,
}

impl Circuit {
    pub fn is_compromised(&self, prepared: &PreparedSnapshot) -> bool {
        prepared.is_adversary(self.guard) && prepared.is_adversary(self.exit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircuitOutcome {
    Built(Circuit),
    /// No relay accepts the stream's port; the stream is skipped.
    NoExit,
    /// Resampling for this position ran out of attempts.
    Failed(Position),
}

/// Picks the guard for one circuit from the live guard list. Uniform.
fn pick_guard<R: Rng + ?Sized>(candidates: &[usize], rng: &mut R) -> usize {
    candidates[rng.gen_range(0..candidates.len())]
}

/// Maintains the guard list, then builds a circuit for `stream`: exit
/// first, then a guard from the list, then a middle. A hop that conflicts
/// with an earlier one (same relay, family or /16) is resampled up to
/// `max_attempts` times.
pub fn build_circuit<R: Rng + ?Sized>(
    state: &mut ClientState,
    prepared: &PreparedSnapshot,
    stream: &StreamSpec,
    rng: &mut R,
    max_attempts: u32,
) -> CircuitOutcome {
    state.maintain_guards(prepared, stream.time, rng, max_attempts);
    let relays = prepared.snapshot().relays();
    let Some(exit) = prepared.sample_exit(stream.destination_port, rng) else {
        return CircuitOutcome::NoExit;
    };

    let guards: Vec<usize> = state
        .guard_list
        .iter()
        .filter_map(|g| prepared.snapshot().index_of(&g.fingerprint))
        .collect();
    if guards.is_empty() {
        return CircuitOutcome::Failed(Position::Entry);
    }
    let guard = (0..max_attempts)
        .map(|_| pick_guard(&guards, rng))
        .find(|&g| !relays[g].conflicts_with(&relays[exit]));
    let Some(guard) = guard else {
        return CircuitOutcome::Failed(Position::Entry);
    };

    let middle = (0..max_attempts)
        .map(|_| prepared.sample_middle(rng))
        .find(|&m| !relays[m].conflicts_with(&relays[guard]) && !relays[m].conflicts_with(&relays[exit]));
    match middle {
        Some(middle) => CircuitOutcome::Built(Circuit { guard, middle, exit }),
        None => CircuitOutcome::Failed(Position::Middle),
    }
}
