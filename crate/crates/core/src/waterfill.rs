//! Per-relay waterfilling weights.
//!
//! A scalar weight such as `Wgg` moves the same fraction of every guard's
//! bandwidth to the middle position. Waterfilling moves the same *amount* of
//! bandwidth in total, but takes it from the largest relays first: with the
//! pool sorted by descending bandwidth `BW_1 >= ... >= BW_K`, it finds a
//! water level `L` and pivot `N` such that
//!
//! ```text
//! w_i * BW_i = L        for i <= N
//! w_i        = 1        for i >  N
//! 0 <= w_i <= 1
//! sum(w_i * BW_i) = target
//! ```
//!
//! where the target is `Wgg*G` for the guard set and `(Wgd+Wed)*D` for the
//! Guard+Exit set. The D-set weight `Wd_i` is then split back into entry and
//! exit shares in the ratio `Wgd : Wed`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusSnapshot, RelayClass};
use crate::error::{Error, Result};
use crate::weights::{scale_weight, PositionWeights, WEIGHT_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPool {
    /// Guard-flagged, non-Exit relays; solves `Wgg_i`.
    GuardSet,
    /// Guard+Exit relays; solves `Wd_i`.
    DSet,
}

/// Solved weights of one relay. `guard + middle + exit == 1` for D-set
/// relays; for guard-set relays `exit` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayWaterWeight {
    pub fingerprint: String,
    pub bandwidth: u64,
    /// `Wgg_i` or `Wd_i`.
    pub weight: f64,
    pub guard: f64,
    pub middle: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillSolution {
    pub target_pool: TargetPool,
    /// Sorted by descending bandwidth, ties by ascending fingerprint.
    pub per_relay: Vec<RelayWaterWeight>,
    pub water_level: f64,
    /// 1-based rank of the last relay capped at the water level.
    pub pivot_index: usize,
    pub target: f64,
    /// `sum(w_i * BW_i) - target`
    pub conservation_residual: f64,
    /// Same residual after quantizing every weight to the 0..=10000 scale.
    pub quantized_residual: f64,
    pub source_weights: PositionWeights,
}

/// Water level, pivot and weights for a descending bandwidth list.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterLevel {
    pub level: f64,
    pub pivot: usize,
    pub weights: Vec<f64>,
}

// Tolerates rounding in the level's upper bound so that a level equal to a
// relay's bandwidth is not rejected on both sides of the boundary.
const UPPER_SLACK: f64 = 1e-12;

/// Finds the water level for `bandwidths` (sorted descending) so that the
/// filled total equals `target`, scanning pivots from the top.
///
/// Zero-bandwidth entries are left at weight 1.
pub fn fill_to_target(bandwidths: &[u64], target: f64) -> Result<WaterLevel> {
    debug_assert!(bandwidths.windows(2).all(|w| w[0] >= w[1]));
    let k = bandwidths.iter().take_while(|&&bw| bw > 0).count();
    let total: u64 = bandwidths[..k].iter().sum();
    if k == 0 || !(target > 0.0) {
        return Err(Error::NotApplicable(format!(
            "nothing to fill: {k} relays with bandwidth, target {target}"
        )));
    }
    if target > total as f64 * (1.0 + UPPER_SLACK) {
        return Err(Error::Infeasible(format!(
            "target {target} exceeds pool bandwidth {total}"
        )));
    }

    // suffix[n] = sum of bandwidths at 0-based positions n..k
    let mut suffix = vec![0u64; k + 1];
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] + bandwidths[i];
    }

    for n in 1..=k {
        let level = (target - suffix[n] as f64) / n as f64;
        let upper = bandwidths[n - 1] as f64;
        let lower = if n < k { bandwidths[n] as f64 } else { 0.0 };
        if level >= lower && level <= upper * (1.0 + UPPER_SLACK) {
            let weights = bandwidths
                .iter()
                .enumerate()
                .map(|(i, &bw)| {
                    if i < n {
                        (level / bw as f64).min(1.0)
                    } else {
                        1.0
                    }
                })
                .collect();
            return Ok(WaterLevel {
                level,
                pivot: n,
                weights,
            });
        }
    }
    Err(Error::Infeasible(format!(
        "no pivot satisfies the water level constraints for target {target}"
    )))
}

/// Collects `(fingerprint, bandwidth)` for a pool, sorted descending by
/// bandwidth with ties broken by ascending fingerprint.
fn sorted_pool(snapshot: &ConsensusSnapshot, class: RelayClass) -> Vec<(&str, u64)> {
    let mut pool: Vec<(&str, u64)> = snapshot
        .relays()
        .iter()
        .filter(|r| r.class() == class)
        .map(|r| (r.fingerprint.as_str(), r.consensus_weight))
        .collect();
    pool.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    pool
}

fn residuals(pool: &[(&str, u64)], weights: &[f64], target: f64) -> (f64, f64) {
    let exact: f64 = pool
        .iter()
        .zip(weights)
        .map(|(&(_, bw), &w)| w * bw as f64)
        .sum();
    let quantized: f64 = pool
        .iter()
        .zip(weights)
        .map(|(&(_, bw), &w)| scale_weight(w) as f64 / WEIGHT_SCALE * bw as f64)
        .sum();
    (exact - target, quantized - target)
}

/// Waterfilling on the guard set. Applies only when `0 < Wgg < 1`.
pub fn solve_guard_waterfill(snapshot: &ConsensusSnapshot, w: &PositionWeights) -> Result<WaterfillSolution> {
    if !(w.wgg > 0.0 && w.wgg < 1.0) {
        return Err(Error::NotApplicable(format!(
            "Wgg = {} leaves no guard bandwidth to redistribute",
            w.wgg
        )));
    }
    let pool = sorted_pool(snapshot, RelayClass::Guard);
    let g = snapshot.totals().g;
    if g == 0 {
        return Err(Error::NotApplicable("guard pool is empty".into()));
    }
    let target = w.wgg * g as f64;
    let bandwidths: Vec<u64> = pool.iter().map(|p| p.1).collect();
    let filled = fill_to_target(&bandwidths, target)?;
    let (conservation_residual, quantized_residual) = residuals(&pool, &filled.weights, target);

    let per_relay = pool
        .iter()
        .zip(&filled.weights)
        .map(|(&(fp, bw), &wi)| RelayWaterWeight {
            fingerprint: fp.to_string(),
            bandwidth: bw,
            weight: wi,
            guard: wi,
            middle: 1.0 - wi,
            exit: 0.0,
        })
        .collect();

    Ok(WaterfillSolution {
        target_pool: TargetPool::GuardSet,
        per_relay,
        water_level: filled.level,
        pivot_index: filled.pivot,
        target,
        conservation_residual,
        quantized_residual,
        source_weights: w.clone(),
    })
}

/// Waterfilling on the Guard+Exit set with target `(Wgd+Wed)*D`.
pub fn solve_dset_waterfill(snapshot: &ConsensusSnapshot, w: &PositionWeights) -> Result<WaterfillSolution> {
    let share = w.wgd + w.wed;
    if !(share > 0.0) {
        return Err(Error::NotApplicable("Wgd + Wed = 0".into()));
    }
    if share > 1.0 + UPPER_SLACK {
        return Err(Error::Infeasible(format!("Wgd + Wed = {share} exceeds 1")));
    }
    let d = snapshot.totals().d;
    if d == 0 {
        return Err(Error::NotApplicable("Guard+Exit pool is empty".into()));
    }
    let pool = sorted_pool(snapshot, RelayClass::GuardExit);
    let target = share.min(1.0) * d as f64;
    let bandwidths: Vec<u64> = pool.iter().map(|p| p.1).collect();
    let filled = fill_to_target(&bandwidths, target)?;
    let (conservation_residual, quantized_residual) = residuals(&pool, &filled.weights, target);

    let guard_part = w.wgd / share;
    let exit_part = w.wed / share;
    let per_relay = pool
        .iter()
        .zip(&filled.weights)
        .map(|(&(fp, bw), &wd)| RelayWaterWeight {
            fingerprint: fp.to_string(),
            bandwidth: bw,
            weight: wd,
            guard: wd * guard_part,
            middle: 1.0 - wd,
            exit: wd * exit_part,
        })
        .collect();

    Ok(WaterfillSolution {
        target_pool: TargetPool::DSet,
        per_relay,
        water_level: filled.level,
        pivot_index: filled.pivot,
        target,
        conservation_residual,
        quantized_residual,
        source_weights: w.clone(),
    })
}

impl WaterfillSolution {
    pub fn by_fingerprint(&self) -> HashMap<&str, &RelayWaterWeight> {
        self.per_relay
            .iter()
            .map(|r| (r.fingerprint.as_str(), r))
            .collect()
    }

    /// Per-relay `wfbw` lines carrying the integer-scaled weights.
    pub fn wfbw_lines(&self) -> Vec<String> {
        self.per_relay
            .iter()
            .map(|r| match self.target_pool {
                TargetPool::GuardSet => format!(
                    "{} wfbw Wgg={} Wmg={}",
                    r.fingerprint,
                    scale_weight(r.guard),
                    scale_weight(r.middle)
                ),
                TargetPool::DSet => format!(
                    "{} wfbw Wgd={} Wmd={} Wed={}",
                    r.fingerprint,
                    scale_weight(r.guard),
                    scale_weight(r.middle),
                    scale_weight(r.exit)
                ),
            })
            .collect()
    }
}

/// Solves every applicable pool for `w`. Pools that do not apply are
/// skipped; other errors propagate.
pub fn solve_applicable(snapshot: &ConsensusSnapshot, w: &PositionWeights, pools: &[TargetPool]) -> Result<Vec<WaterfillSolution>> {
    let mut out = Vec::new();
    for pool in pools {
        let solved = match pool {
            TargetPool::GuardSet => solve_guard_waterfill(snapshot, w),
            TargetPool::DSet => solve_dset_waterfill(snapshot, w),
        };
        match solved {
            Ok(s) => out.push(s),
            Err(Error::NotApplicable(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::{LoadCase, RelayEntry};
    use crate::weights::WeightMode;

    fn scalar(wgg: f64, wgd: f64, wed: f64) -> PositionWeights {
        PositionWeights {
            case: LoadCase::Case3aESgtM,
            mode: WeightMode::Standard,
            requested_mode: WeightMode::Standard,
            wgg,
            wmg: 1.0 - wgg,
            wee: 1.0,
            wme: 0.0,
            wgd,
            wmd: 1.0 - wgd - wed,
            wed,
            notes: vec![],
        }
    }

    fn guards(bws: &[u64]) -> ConsensusSnapshot {
        let relays = bws
            .iter()
            .enumerate()
            .map(|(i, &bw)| RelayEntry::new(format!("G{i:03}"), "g", bw).with_flags(["Guard"]))
            .collect();
        ConsensusSnapshot::new(0, relays).unwrap()
    }

    #[test]
    fn three_guard_hand_solution() {
        let filled = fill_to_target(&[100, 60, 20], 120.0).unwrap();
        assert_eq!(filled.level, 50.0);
        assert_eq!(filled.pivot, 2);
        assert_eq!(filled.weights, vec![0.5, 50.0 / 60.0, 1.0]);
    }

    #[test]
    fn equal_guards_get_equal_weights() {
        let filled = fill_to_target(&[100, 100, 100], 240.0).unwrap();
        assert_eq!(filled.level, 80.0);
        assert_eq!(filled.pivot, 3);
        assert_eq!(filled.weights, vec![0.8; 3]);
    }

    #[test]
    fn single_guard() {
        let snap = guards(&[100]);
        let sol = solve_guard_waterfill(&snap, &scalar(0.6, 0.0, 1.0)).unwrap();
        assert_eq!(sol.water_level, 60.0);
        assert_eq!(sol.pivot_index, 1);
        assert_eq!(sol.per_relay[0].weight, 0.6);
        assert!((sol.per_relay[0].middle - 0.4).abs() < 1e-15);
    }

    #[test]
    fn wgg_boundaries_not_applicable() {
        let snap = guards(&[100, 50]);
        for wgg in [0.0, 1.0] {
            assert!(matches!(
                solve_guard_waterfill(&snap, &scalar(wgg, 0.0, 1.0)),
                Err(Error::NotApplicable(_))
            ));
        }
    }

    #[test]
    fn zero_bandwidth_relays_keep_full_weight() {
        let snap = guards(&[0, 100, 60, 20, 0]);
        let sol = solve_guard_waterfill(&snap, &scalar(0.666_666_666_666_666_6, 0.0, 1.0)).unwrap();
        assert_eq!(sol.per_relay.len(), 5);
        assert_eq!(sol.per_relay[3].bandwidth, 0);
        assert_eq!(sol.per_relay[3].weight, 1.0);
        assert_eq!(sol.per_relay[4].weight, 1.0);
        assert!((sol.water_level - 50.0).abs() < 1e-9);
        assert_eq!(sol.pivot_index, 2);
    }

    #[test]
    fn sort_ties_by_fingerprint() {
        let relays = vec![
            RelayEntry::new("b", "b", 100).with_flags(["Guard"]),
            RelayEntry::new("a", "a", 100).with_flags(["Guard"]),
            RelayEntry::new("c", "c", 10).with_flags(["Guard"]),
        ];
        let snap = ConsensusSnapshot::new(0, relays).unwrap();
        let sol = solve_guard_waterfill(&snap, &scalar(0.5, 0.0, 1.0)).unwrap();
        let order: Vec<&str> = sol.per_relay.iter().map(|r| r.fingerprint.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        assert_eq!(sol.per_relay[0].weight, sol.per_relay[1].weight);
    }

    #[test]
    fn target_above_pool_is_infeasible() {
        assert!(matches!(fill_to_target(&[10, 5], 16.0), Err(Error::Infeasible(_))));
        assert!(matches!(fill_to_target(&[], 1.0), Err(Error::NotApplicable(_))));
    }

    fn dset(bws: &[u64]) -> ConsensusSnapshot {
        let mut relays: Vec<RelayEntry> = bws
            .iter()
            .enumerate()
            .map(|(i, &bw)| RelayEntry::new(format!("D{i}"), "d", bw).with_flags(["Guard", "Exit"]))
            .collect();
        relays.push(RelayEntry::new("G", "g", 500).with_flags(["Guard"]));
        ConsensusSnapshot::new(0, relays).unwrap()
    }

    #[test]
    fn dset_split_example() {
        let snap = dset(&[50, 50]);
        let sol = solve_dset_waterfill(&snap, &scalar(0.5, 0.2, 0.3)).unwrap();
        assert_eq!(sol.target_pool, TargetPool::DSet);
        assert!((sol.target - 50.0).abs() < 1e-12);
        assert!((sol.water_level - 25.0).abs() < 1e-12);
        for r in &sol.per_relay {
            assert!((r.weight - 0.5).abs() < 1e-12);
            assert!((r.guard - 0.2).abs() < 1e-12);
            assert!((r.exit - 0.3).abs() < 1e-12);
            assert!((r.middle - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dset_full_share_is_identity() {
        let snap = dset(&[70, 40, 10]);
        let sol = solve_dset_waterfill(&snap, &scalar(0.5, 0.0, 1.0)).unwrap();
        assert_eq!(sol.water_level, 70.0);
        assert!(sol.per_relay.iter().all(|r| r.weight == 1.0 && r.middle == 0.0));
    }

    #[test]
    fn dset_single_node() {
        let snap = dset(&[80]);
        let sol = solve_dset_waterfill(&snap, &scalar(0.5, 0.2, 0.3)).unwrap();
        assert_eq!(sol.per_relay[0].weight, 0.5);
    }

    #[test]
    fn dset_not_applicable() {
        assert!(matches!(
            solve_dset_waterfill(&dset(&[10]), &scalar(0.5, 0.0, 0.0)),
            Err(Error::NotApplicable(_))
        ));
        assert!(matches!(
            solve_dset_waterfill(&guards(&[10]), &scalar(0.5, 0.2, 0.3)),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn wfbw_rendering() {
        let snap = guards(&[100, 60, 20]);
        let sol = solve_guard_waterfill(&snap, &scalar(2.0 / 3.0, 0.0, 1.0)).unwrap();
        assert!((sol.water_level - 50.0).abs() < 1e-9);
        assert_eq!(
            sol.wfbw_lines(),
            vec![
                "G000 wfbw Wgg=5000 Wmg=5000",
                "G001 wfbw Wgg=8333 Wmg=1667",
                "G002 wfbw Wgg=10000 Wmg=0",
            ]
        );
        assert!(sol.quantized_residual.abs() < 0.01);
    }

    #[test]
    fn solve_applicable_skips_inapplicable_pools() {
        let snap = guards(&[100, 60, 20]);
        let sols = solve_applicable(&snap, &scalar(2.0 / 3.0, 0.0, 1.0), &[TargetPool::GuardSet, TargetPool::DSet]).unwrap();
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0].target_pool, TargetPool::GuardSet);
    }
}
