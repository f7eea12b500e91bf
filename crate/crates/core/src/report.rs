//! Derived statistics: adversary cost under waterfilling, paired comparison
//! of two simulation runs, and the reproducible report bundle.

use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusSnapshot, LoadCase, PoolTotals};
use crate::error::{Error, Result};
use crate::pathsim::{compromise_curve, Algorithm, CompromiseRecord, PreparedSnapshot, TimeSeries};
use crate::waterfill::{TargetPool, WaterfillSolution};
use crate::weights::{BalanceReport, PositionWeights, check_balance};

pub const TOOL_NAME: &str = "waterweights";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative slack when rounding a node count up, so that an exact multiple
/// of the water level is not pushed to the next integer by float noise.
const NODE_COUNT_TOLERANCE: f64 = 1e-9;

/// Significance level for sign-test verdicts.
pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub target_guard_weight: u64,
    pub wgg: f64,
    pub water_level: f64,
    /// Consensus weight that the target actually contributes to the entry
    /// position under scalar weights.
    pub effective_guard_weight: f64,
    /// Relays at the water level needed to match that entry contribution.
    pub nodes: u64,
    /// Consensus weight needed under waterfilling relative to the scalar
    /// scheme; relays at the water level give all their bandwidth to the
    /// entry position.
    pub bandwidth_ratio: f64,
}

pub fn adversary_cost(target_guard_weight: u64, wgg: f64, water_level: f64) -> Result<CostReport> {
    if !(water_level > 0.0) || !water_level.is_finite() {
        return Err(Error::NotApplicable(format!("water level {water_level} is not positive")));
    }
    if !(wgg > 0.0 && wgg <= 1.0) {
        return Err(Error::InvalidInput(format!("Wgg = {wgg} outside (0, 1]")));
    }
    let effective = target_guard_weight as f64 * wgg;
    let ratio = effective / water_level;
    let nearest = ratio.round();
    let nodes = if (ratio - nearest).abs() <= NODE_COUNT_TOLERANCE * ratio.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    Ok(CostReport {
        target_guard_weight,
        wgg,
        water_level,
        effective_guard_weight: effective,
        nodes: nodes as u64,
        bandwidth_ratio: wgg,
    })
}

/// [`adversary_cost`] at the water level of `wf`.
pub fn report_adversary_cost(wf: &WaterfillSolution, target_guard_weight: u64, wgg: f64) -> Result<CostReport> {
    adversary_cost(target_guard_weight, wgg, wf.water_level)
}

/// Exact one-sided sign test on paired samples. Ties are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub n_greater: u64,
    pub n_less: u64,
    pub n_ties: u64,
    /// P(at least `n_greater` successes) under Binomial(n, 1/2).
    pub p_greater: f64,
    /// P(at least `n_less` successes) under Binomial(n, 1/2).
    pub p_less: f64,
}

impl SignTest {
    pub fn first_greater(&self) -> bool {
        self.p_greater < SIGNIFICANCE
    }

    pub fn first_less(&self) -> bool {
        self.p_less < SIGNIFICANCE
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // ln C(n, i) built up incrementally.
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_c = 0.0;
    let mut tail = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            tail += (ln_c + ln_half_n).exp();
        }
    }
    tail.min(1.0)
}

pub fn sign_test(pairs: impl IntoIterator<Item = (f64, f64)>) -> SignTest {
    let (mut greater, mut less, mut ties) = (0, 0, 0);
    for (a, b) in pairs {
        match a.partial_cmp(&b) {
            Some(std::cmp::Ordering::Greater) => greater += 1,
            Some(std::cmp::Ordering::Less) => less += 1,
            _ => ties += 1,
        }
    }
    let n = greater + less;
    SignTest {
        n_greater: greater,
        n_less: less,
        n_ties: ties,
        p_greater: binomial_upper_tail(n, greater),
        p_less: binomial_upper_tail(n, less),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub horizon: i64,
    pub curve_a: TimeSeries,
    pub curve_b: TimeSeries,
    /// `a - b` at every curve point.
    pub deltas: Vec<f64>,
    pub terminal_delta: f64,
    pub sign_test: SignTest,
    /// `a-greater`, `b-greater` or `no-difference` at [`SIGNIFICANCE`].
    pub verdict: String,
}

/// Pairs the compromise curves of two runs over the same clients.
pub fn compare_runs(a: &[CompromiseRecord], b: &[CompromiseRecord], horizon: i64, resolution: usize) -> Result<ComparisonReport> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "runs have {} and {} clients",
            a.len(),
            b.len()
        )));
    }
    let mut ids_a: Vec<u64> = a.iter().map(|r| r.client_id).collect();
    let mut ids_b: Vec<u64> = b.iter().map(|r| r.client_id).collect();
    ids_a.sort_unstable();
    ids_b.sort_unstable();
    if ids_a != ids_b {
        return Err(Error::InvalidInput("runs cover different client ids".into()));
    }
    let curve_a = compromise_curve(a, horizon, resolution)?;
    let curve_b = compromise_curve(b, horizon, resolution)?;
    let deltas: Vec<f64> = curve_a
        .points
        .iter()
        .zip(&curve_b.points)
        .map(|(x, y)| x.fraction - y.fraction)
        .collect();
    let terminal_delta = *deltas.last().expect("curve has points");
    let test = sign_test(curve_a.points.iter().zip(&curve_b.points).map(|(x, y)| (x.fraction, y.fraction)));
    let verdict = if test.first_greater() {
        "a-greater"
    } else if test.first_less() {
        "b-greater"
    } else {
        "no-difference"
    };
    Ok(ComparisonReport {
        horizon,
        curve_a,
        curve_b,
        deltas,
        terminal_delta,
        sign_test: test,
        verdict: verdict.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillSummary {
    pub pool: TargetPool,
    pub relays: usize,
    pub water_level: f64,
    pub pivot_index: usize,
    pub target: f64,
    pub conservation_residual: f64,
}

impl From<&WaterfillSolution> for WaterfillSummary {
    fn from(s: &WaterfillSolution) -> Self {
        WaterfillSummary {
            pool: s.target_pool,
            relays: s.per_relay.len(),
            water_level: s.water_level,
            pivot_index: s.pivot_index,
            target: s.target,
            conservation_residual: s.conservation_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub valid_after: i64,
    pub relays: usize,
    pub totals: PoolTotals,
    pub case: LoadCase,
    pub weights: PositionWeights,
    pub balance: BalanceReport,
    pub waterfill: Vec<WaterfillSummary>,
}

impl SnapshotSummary {
    pub fn new(snapshot: &ConsensusSnapshot, case: LoadCase, weights: PositionWeights, solutions: &[WaterfillSolution]) -> Self {
        let balance = check_balance(&snapshot.totals(), &weights);
        SnapshotSummary {
            valid_after: snapshot.valid_after(),
            relays: snapshot.len(),
            totals: snapshot.totals(),
            case,
            weights,
            balance,
            waterfill: solutions.iter().map(WaterfillSummary::from).collect(),
        }
    }

    pub fn from_prepared(p: &PreparedSnapshot) -> Self {
        Self::new(p.snapshot(), p.load_case().clone(), p.weights().clone(), p.solutions())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub series: TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Echo of the invocation's settings.
    pub run_config: serde_json::Value,
    pub snapshots: Vec<SnapshotSummary>,
    pub series: Vec<NamedSeries>,
    pub adversary_cost: Option<CostReport>,
}

impl ReportBundle {
    pub fn new(seed: u64, algorithm: Algorithm, run_config: serde_json::Value) -> Self {
        ReportBundle {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            seed,
            algorithm,
            run_config,
            snapshots: Vec::new(),
            series: Vec::new(),
            adversary_cost: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
