//! Positional bandwidth-weights and per-relay waterfilling weights for
//! onion-routing networks, a seeded path-selection simulator with relay
//! adversaries, and anonymity metrics over the resulting selection
//! distributions.
//!
//! Typical pipeline:
//!
//! 1. [`consensus::parse_native`] or [`consensus::parse_v3_subset`] to get a
//!    [`ConsensusSnapshot`].
//! 2. [`weights::compute_weights`] on its pool totals and load case.
//! 3. [`waterfill::solve_guard_waterfill`] / [`waterfill::solve_dset_waterfill`].
//! 4. [`selection::selection_distribution`] per position, or
//!    [`pathsim::run_simulation`] over a snapshot sequence.
//! 5. [`metrics`] and [`report`] on the outputs.

pub mod consensus;
pub mod error;
pub mod metrics;
pub mod pathsim;
pub mod report;
pub mod selection;
pub mod waterfill;
pub mod weights;

pub use consensus::{ConsensusSnapshot, LoadCase, PoolTotals, RelayEntry};
pub use error::{Error, Result};
pub use weights::{PositionWeights, WeightMode};
pub use waterfill::WaterfillSolution;
