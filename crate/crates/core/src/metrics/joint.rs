use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusSnapshot;
use crate::error::{Error, Result};
use crate::selection::ProbabilityVector;

/// Tolerance on `sum(p) == 1`.
pub const JOINT_SUM_TOLERANCE: f64 = 1e-9;

/// Probability `p[i][j]` that a circuit uses guard `i` with exit `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    guards: Vec<String>,
    exits: Vec<String>,
    /// Row-major, one row per guard.
    p: Vec<f64>,
}

impl JointDistribution {
    /// Validates an already-normalized matrix given as rows.
    pub fn new(guards: Vec<String>, exits: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let jd = Self::from_rows(guards, exits, rows)?;
        let total: f64 = jd.p.iter().sum();
        if (total - 1.0).abs() > JOINT_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "joint probabilities sum to {total}, expected 1"
            )));
        }
        Ok(jd)
    }

    /// Accepts any non-negative matrix with positive mass and normalizes it.
    pub fn normalized(guards: Vec<String>, exits: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut jd = Self::from_rows(guards, exits, rows)?;
        let total: f64 = jd.p.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyPool("joint distribution has no mass".into()));
        }
        jd.p.iter_mut().for_each(|v| *v /= total);
        Ok(jd)
    }

    fn from_rows(guards: Vec<String>, exits: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if guards.is_empty() || exits.is_empty() {
            return Err(Error::InvalidInput("joint distribution needs at least one guard and one exit".into()));
        }
        if rows.len() != guards.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows for {} guards",
                rows.len(),
                guards.len()
            )));
        }
        let mut p = Vec::with_capacity(guards.len() * exits.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != exits.len() {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} cells for {} exits",
                    row.len(),
                    exits.len()
                )));
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidInput(format!("invalid probability {bad} in row {i}")));
            }
            p.extend(row);
        }
        Ok(JointDistribution { guards, exits, p })
    }

    pub fn n_guards(&self) -> usize {
        self.guards.len()
    }

    pub fn n_exits(&self) -> usize {
        self.exits.len()
    }

    pub fn guards(&self) -> &[String] {
        &self.guards
    }

    pub fn exits(&self) -> &[String] {
        &self.exits
    }

    pub fn get(&self, guard: usize, exit: usize) -> f64 {
        self.p[guard * self.exits.len() + exit]
    }

    pub fn row(&self, guard: usize) -> &[f64] {
        let k = self.exits.len();
        &self.p[guard * k..(guard + 1) * k]
    }

    pub fn cells(&self) -> &[f64] {
        &self.p
    }

    pub fn guard_marginal(&self) -> Vec<f64> {
        (0..self.n_guards()).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn exit_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_exits()];
        for i in 0..self.n_guards() {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    /// Reads the CSV layout written by [`JointDistribution::write_csv`]:
    /// a header `guard,<exit fp>...` then one `<guard fp>,<p>...` row per
    /// guard.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::parse(1, "empty joint CSV"))??;
        let mut cols = header.iter();
        cols.next();
        let exits: Vec<String> = cols.map(str::to_string).collect();
        let mut guards = Vec::new();
        let mut rows = Vec::new();
        for (idx, record) in records.enumerate() {
            let record = record?;
            let line = idx + 2;
            let mut cells = record.iter();
            let guard = cells.next().unwrap_or_default().to_string();
            let row = cells
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(line, format!("invalid probability {c:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            guards.push(guard);
            rows.push(row);
        }
        Self::new(guards, exits, rows)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(std::iter::once("guard").chain(self.exits.iter().map(String::as_str)))?;
        for (i, guard) in self.guards.iter().enumerate() {
            let mut record = vec![guard.clone()];
            record.extend(self.row(i).iter().map(|v| format!("{v:e}")));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Empirical joint distribution from observed `(guard, exit)` pairs. Guards
/// and exits are indexed in ascending fingerprint order.
pub fn estimate_joint_from_sample<'a, I>(pairs: I) -> Result<JointDistribution>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for pair in pairs {
        *counts.entry(pair).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::InvalidInput("empty circuit sample".into()));
    }
    let mut guards: Vec<&str> = counts.keys().map(|k| k.0).collect();
    let mut exits: Vec<&str> = counts.keys().map(|k| k.1).collect();
    guards.sort_unstable();
    guards.dedup();
    exits.sort_unstable();
    exits.dedup();
    let mut rows = vec![vec![0.0; exits.len()]; guards.len()];
    for ((g, e), c) in counts {
        let i = guards.binary_search(&g).expect("guard indexed");
        let j = exits.binary_search(&e).expect("exit indexed");
        rows[i][j] = c as f64;
    }
    JointDistribution::normalized(
        guards.into_iter().map(str::to_string).collect(),
        exits.into_iter().map(str::to_string).collect(),
        rows,
    )
}

/// Outer product of the entry and exit distributions with cells zeroed
/// where `conflict(guard, exit)` holds, renormalized.
pub fn estimate_joint_analytic<F>(entry: &ProbabilityVector, exit: &ProbabilityVector, conflict: F) -> Result<JointDistribution>
where
    F: Fn(&str, &str) -> bool,
{
    let rows = entry
        .fingerprints
        .iter()
        .zip(&entry.probabilities)
        .map(|(g, pg)| {
            exit.fingerprints
                .iter()
                .zip(&exit.probabilities)
                .map(|(e, pe)| if conflict(g, e) { 0.0 } else { pg * pe })
                .collect()
        })
        .collect();
    JointDistribution::normalized(entry.fingerprints.clone(), exit.fingerprints.clone(), rows)
}

/// [`estimate_joint_analytic`] with the circuit constraints of `snapshot`:
/// same relay, family and /16 subnet.
pub fn estimate_joint_for_snapshot(
    snapshot: &ConsensusSnapshot,
    entry: &ProbabilityVector,
    exit: &ProbabilityVector,
) -> Result<JointDistribution> {
    estimate_joint_analytic(entry, exit, |g, e| match (snapshot.get(g), snapshot.get(e)) {
        (Some(a), Some(b)) => a.conflicts_with(b),
        _ => g == e,
    })
}
