//! Anonymity metrics over guard/exit selection.
//!
//! - [`uniformity_degree`]: Shannon entropy of the joint distribution
//!   normalized by its maximum, `log2(N*K)`.
//! - [`guessing_entropy`]: expected number of relays a greedy adversary must
//!   compromise before a circuit has both ends compromised.
//! - [`group_diversity`]: entry-selection probability aggregated by country
//!   or autonomous system.
//!
//! All logarithms are base 2.

mod guessing;
mod joint;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusSnapshot;
use crate::error::{Error, Result};
use crate::selection::ProbabilityVector;

pub use guessing::{guessing_entropy, GuessingTrace, Pick, Side};
pub use joint::{
    estimate_joint_analytic, estimate_joint_for_snapshot, estimate_joint_from_sample, JointDistribution,
    JOINT_SUM_TOLERANCE,
};

/// Shannon entropy in bits, with `0 * log 0 = 0`.
pub fn shannon_entropy(probabilities: &[f64]) -> f64 {
    probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

pub fn uniformity_degree(jd: &JointDistribution) -> Result<f64> {
    let cells = jd.n_guards() * jd.n_exits();
    if cells < 2 {
        return Err(Error::InvalidInput(format!(
            "uniformity degree undefined for {cells} cell(s)"
        )));
    }
    Ok(shannon_entropy(jd.cells()) / (cells as f64).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Country,
    #[serde(rename = "as")]
    As,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupShare {
    pub group: String,
    pub probability: f64,
}

pub const UNKNOWN_GROUP: &str = "unknown";

/// Sums `entry` probabilities per country or AS, sorted by descending
/// probability then ascending group name. Relays without the metadata (or
/// absent from `snapshot`) fall into [`UNKNOWN_GROUP`].
pub fn group_diversity(snapshot: &ConsensusSnapshot, entry: &ProbabilityVector, key: GroupKey) -> Vec<GroupShare> {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for (fp, p) in entry.fingerprints.iter().zip(&entry.probabilities) {
        let relay = snapshot.get(fp);
        let group = match key {
            GroupKey::Country => relay.and_then(|r| r.country.clone()),
            GroupKey::As => relay.and_then(|r| r.as_number).map(|asn| format!("AS{asn}")),
        }
        .unwrap_or_else(|| UNKNOWN_GROUP.to_string());
        *sums.entry(group).or_default() += p;
    }
    let mut table: Vec<GroupShare> = sums
        .into_iter()
        .map(|(group, probability)| GroupShare { group, probability })
        .collect();
    table.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.group.cmp(&b.group)));
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::RelayEntry;

    fn jd(rows: Vec<Vec<f64>>) -> JointDistribution {
        let guards = (0..rows.len()).map(|i| format!("g{i}")).collect();
        let exits = (0..rows[0].len()).map(|j| format!("e{j}")).collect();
        JointDistribution::new(guards, exits, rows).unwrap()
    }

    #[test]
    fn uniform_matrix_has_degree_one() {
        let d = uniformity_degree(&jd(vec![vec![1.0 / 16.0; 4]; 4])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_has_degree_zero() {
        let mut rows = vec![vec![0.0; 4]; 4];
        rows[2][1] = 1.0;
        assert_eq!(uniformity_degree(&jd(rows)).unwrap(), 0.0);
    }

    #[test]
    fn skewed_sender_distribution() {
        // 1024 senders at 1/2048 and one at 1/2.
        let mut row = vec![1.0 / 2048.0; 1024];
        row.push(0.5);
        let d = uniformity_degree(&jd(vec![row])).unwrap();
        assert!((d - 0.6).abs() < 1e-3, "{d}");
    }

    #[test]
    fn single_cell_degree_undefined() {
        assert!(uniformity_degree(&jd(vec![vec![1.0]])).is_err());
    }

    fn located(fp: &str, cc: Option<&str>, asn: Option<u32>) -> RelayEntry {
        let mut r = RelayEntry::new(fp, fp, 1).with_flags(["Guard"]);
        r.country = cc.map(str::to_string);
        r.as_number = asn;
        r
    }

    fn pv(fps: &[&str], probs: &[f64]) -> ProbabilityVector {
        ProbabilityVector {
            fingerprints: fps.iter().map(|s| s.to_string()).collect(),
            indices: (0..fps.len()).collect(),
            probabilities: probs.to_vec(),
        }
    }

    #[test]
    fn country_table() {
        let snap = ConsensusSnapshot::new(
            0,
            vec![located("a", Some("A"), None), located("b", Some("B"), None)],
        )
        .unwrap();
        let t = group_diversity(&snap, &pv(&["a", "b"], &[0.3, 0.7]), GroupKey::Country);
        assert_eq!(
            t,
            vec![
                GroupShare { group: "B".into(), probability: 0.7 },
                GroupShare { group: "A".into(), probability: 0.3 },
            ]
        );
    }

    #[test]
    fn single_country_and_unknowns() {
        let snap = ConsensusSnapshot::new(
            0,
            vec![located("a", Some("de"), Some(1)), located("b", Some("de"), None)],
        )
        .unwrap();
        let entry = pv(&["a", "b"], &[0.4, 0.6]);
        let t = group_diversity(&snap, &entry, GroupKey::Country);
        assert_eq!(t.len(), 1);
        assert!((t[0].probability - 1.0).abs() < 1e-12);
        let t = group_diversity(&snap, &entry, GroupKey::As);
        assert_eq!(t[0].group, UNKNOWN_GROUP);
        assert_eq!(t[1].group, "AS1");
    }
}
