//! Scalar positional bandwidth-weights.
//!
//! The directory balances three positions (entry, middle, exit) through:
//!
//! ```text
//! (1)  Wgg*G + Wgd*D = M + Wmd*D + Wme*E + Wmg*G     entry == middle
//! (2)  Wgg*G + Wgd*D = Wee*E + Wed*D                 entry == exit
//! (3)  Wgd + Wmd + Wed = 1
//! (4)  Wgg + Wmg = 1
//! (5)  Wee + Wme = 1
//! ```
//!
//! Only three load cases are solved: [`LoadCase::Balanced`],
//! [`LoadCase::Case3aESgtM`] and [`LoadCase::Case3bES`].

use serde::{Deserialize, Serialize};

use crate::consensus::{LoadCase, PoolTotals};
use crate::error::{Error, Result};

/// Which equation the weights preserve when exits are scarce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Directory formulas: entry and middle are equalized.
    Standard,
    /// Entry and exit are equalized, `Wgg = (E+D)/G`; the remainder goes
    /// to the middle position.
    GuardExitEqualized,
}

/// Note attached to 3b weights so downstream comparisons can detect the
/// even split of `D` between entry and middle.
pub const CASE_3B_CONVENTION: &str = "case 3bE=S solved with convention Wmd = Wgd = (1 - Wed)/2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionWeights {
    pub case: LoadCase,
    /// Mode actually applied.
    pub mode: WeightMode,
    pub requested_mode: WeightMode,
    #[serde(rename = "Wgg")]
    pub wgg: f64,
    #[serde(rename = "Wmg")]
    pub wmg: f64,
    #[serde(rename = "Wee")]
    pub wee: f64,
    #[serde(rename = "Wme")]
    pub wme: f64,
    #[serde(rename = "Wgd")]
    pub wgd: f64,
    #[serde(rename = "Wmd")]
    pub wmd: f64,
    #[serde(rename = "Wed")]
    pub wed: f64,
    /// Conventions and degradations applied while solving.
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Weights on Tor's integer scale (0..=10000), rounded half-to-even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledWeights {
    #[serde(rename = "Wgg")]
    pub wgg: i64,
    #[serde(rename = "Wmg")]
    pub wmg: i64,
    #[serde(rename = "Wee")]
    pub wee: i64,
    #[serde(rename = "Wme")]
    pub wme: i64,
    #[serde(rename = "Wgd")]
    pub wgd: i64,
    #[serde(rename = "Wmd")]
    pub wmd: i64,
    #[serde(rename = "Wed")]
    pub wed: i64,
}

pub const WEIGHT_SCALE: f64 = 10000.0;

pub fn scale_weight(w: f64) -> i64 {
    (w * WEIGHT_SCALE).round_ties_even() as i64
}

impl PositionWeights {
    fn from_values(
        case: LoadCase,
        mode: WeightMode,
        requested_mode: WeightMode,
        [wgg, wee, wgd, wmd, wed]: [f64; 5],
    ) -> Self {
        PositionWeights {
            case,
            mode,
            requested_mode,
            wgg,
            wmg: 1.0 - wgg,
            wee,
            wme: 1.0 - wee,
            wgd,
            wmd,
            wed,
            notes: Vec::new(),
        }
    }

    pub fn scaled(&self) -> ScaledWeights {
        ScaledWeights {
            wgg: scale_weight(self.wgg),
            wmg: scale_weight(self.wmg),
            wee: scale_weight(self.wee),
            wme: scale_weight(self.wme),
            wgd: scale_weight(self.wgd),
            wmd: scale_weight(self.wmd),
            wed: scale_weight(self.wed),
        }
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("Wgg", self.wgg),
            ("Wmg", self.wmg),
            ("Wee", self.wee),
            ("Wme", self.wme),
            ("Wgd", self.wgd),
            ("Wmd", self.wmd),
            ("Wed", self.wed),
        ]
    }

    /// Rejects any weight outside `[0, 1]` beyond rounding noise, then clamps
    /// the noise away.
    fn checked(mut self) -> Result<Self> {
        const SLACK: f64 = 1e-12;
        for (name, value) in self.named() {
            if !value.is_finite() || !(-SLACK..=1.0 + SLACK).contains(&value) {
                return Err(Error::Infeasible(format!(
                    "{name} = {value} outside [0, 1] for case {}",
                    self.case
                )));
            }
        }
        for w in [
            &mut self.wgg,
            &mut self.wmg,
            &mut self.wee,
            &mut self.wme,
            &mut self.wgd,
            &mut self.wmd,
            &mut self.wed,
        ] {
            *w = w.clamp(0.0, 1.0);
        }
        Ok(self)
    }
}

/// Solves the weight system for a supported load case.
///
/// A `GuardExitEqualized` request that is infeasible (`E+D > G`) or that
/// does not apply to the case degrades to `Standard` and records a note.
pub fn compute_weights(totals: &PoolTotals, case: &LoadCase, mode: WeightMode) -> Result<PositionWeights> {
    let (g, m, e, d) = (
        totals.g as f64,
        totals.m as f64,
        totals.e as f64,
        totals.d as f64,
    );
    let t = totals.t() as f64;
    let mut notes = Vec::new();

    let (applied, values) = match case {
        LoadCase::Unsupported(reason) => return Err(Error::UnsupportedCase(reason.clone())),
        LoadCase::Case3aESgtM => {
            if g == 0.0 {
                return Err(Error::Infeasible("case 3a with an empty guard pool".into()));
            }
            let equalized = mode == WeightMode::GuardExitEqualized;
            if equalized && totals.e + totals.d <= totals.g {
                (mode, [(e + d) / g, 1.0, 0.0, 0.0, 1.0])
            } else {
                if equalized {
                    notes.push(format!(
                        "guard-exit equalization infeasible (E+D = {} > G = {}); using standard weights",
                        totals.e + totals.d,
                        totals.g
                    ));
                }
                (WeightMode::Standard, [(g + m) / (2.0 * g), 1.0, 0.0, 0.0, 1.0])
            }
        }
        LoadCase::Case3bES => {
            if g == 0.0 || d == 0.0 {
                return Err(Error::Infeasible("case 3b needs non-empty G and D pools".into()));
            }
            if mode == WeightMode::GuardExitEqualized {
                notes.push("guard-exit equalization only applies to case 3a; using standard weights".into());
            }
            // Each position carries T/3. Wed lifts the exit side to T/3,
            // the rest of D is split evenly between entry and middle.
            let third = t / 3.0;
            let wed = (third - e) / d;
            let wgd = (1.0 - wed) / 2.0;
            let wmd = wgd;
            let wgg = (third - wgd * d) / g;
            notes.push(CASE_3B_CONVENTION.to_string());
            (WeightMode::Standard, [wgg, 1.0, wgd, wmd, wed])
        }
        LoadCase::Balanced => {
            if g == 0.0 || e == 0.0 {
                return Err(Error::Infeasible("balanced case needs non-empty G and E pools".into()));
            }
            if mode == WeightMode::GuardExitEqualized {
                notes.push("guard-exit equalization only applies to case 3a; using standard weights".into());
            }
            let share = 1.0 / 3.0;
            let per_position = (t - d) / 3.0;
            (
                WeightMode::Standard,
                [per_position / g, per_position / e, share, share, share],
            )
        }
    };

    let mut weights = PositionWeights::from_values(case.clone(), applied, mode, values);
    weights.notes = notes;
    weights.checked()
}

/// Whether one side of a balance equation equals, exceeds or falls short of
/// the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Equal,
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `Wgg*G + Wgd*D`
    pub entry: f64,
    /// `M + Wmd*D + Wme*E + Wmg*G`
    pub middle: f64,
    /// `Wee*E + Wed*D`
    pub exit: f64,
    /// `entry - middle`
    pub eq1_residual: f64,
    /// `entry - exit`
    pub eq2_residual: f64,
    pub eq1: Relation,
    pub eq2: Relation,
    /// Residuals with magnitude at most this are reported as equalities.
    pub tolerance: f64,
}

/// Relative tolerance (times `T`) for treating a balance residual as zero.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

pub fn check_balance(totals: &PoolTotals, w: &PositionWeights) -> BalanceReport {
    let (g, m, e, d) = (
        totals.g as f64,
        totals.m as f64,
        totals.e as f64,
        totals.d as f64,
    );
    let entry = w.wgg * g + w.wgd * d;
    let middle = m + w.wmd * d + w.wme * e + w.wmg * g;
    let exit = w.wee * e + w.wed * d;
    let tolerance = BALANCE_TOLERANCE * totals.t() as f64;
    let relation = |r: f64| {
        if r.abs() <= tolerance {
            Relation::Equal
        } else if r > 0.0 {
            Relation::Greater
        } else {
            Relation::Less
        }
    };
    BalanceReport {
        entry,
        middle,
        exit,
        eq1_residual: entry - middle,
        eq2_residual: entry - exit,
        eq1: relation(entry - middle),
        eq2: relation(entry - exit),
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::classify_load_case;
    use proptest::prelude::*;

    fn consistent(w: &PositionWeights) {
        assert!((w.wmg - (1.0 - w.wgg)).abs() < 1e-12);
        assert!((w.wme - (1.0 - w.wee)).abs() < 1e-12);
        assert!((w.wgd + w.wmd + w.wed - 1.0).abs() < 1e-9);
    }

    #[test]
    fn case3a_standard_example() {
        let totals = PoolTotals::new(6000, 4000, 1000, 500);
        let w = compute_weights(&totals, &LoadCase::Case3aESgtM, WeightMode::Standard).unwrap();
        assert_eq!(w.wgg, 10000.0 / 12000.0);
        assert_eq!((w.wee, w.wed, w.wmd, w.wgd, w.wme), (1.0, 1.0, 0.0, 0.0, 0.0));
        consistent(&w);
        assert_eq!(w.scaled().wgg, 8333);
        assert_eq!(w.scaled().wmg, 1667);
    }

    #[test]
    fn case3a_equalized_example() {
        let totals = PoolTotals::new(6000, 4000, 2500, 500);
        let w = compute_weights(&totals, &LoadCase::Case3aESgtM, WeightMode::GuardExitEqualized).unwrap();
        assert_eq!(w.wgg, 0.5);
        assert_eq!(w.mode, WeightMode::GuardExitEqualized);
        consistent(&w);
    }

    #[test]
    fn balanced_symmetric_example() {
        let totals = PoolTotals::new(100, 100, 100, 0);
        let case = classify_load_case(&totals).unwrap();
        let w = compute_weights(&totals, &case, WeightMode::Standard).unwrap();
        assert_eq!((w.wgg, w.wee, w.wmg, w.wme), (1.0, 1.0, 0.0, 0.0));
        let b = check_balance(&totals, &w);
        assert_eq!((b.eq1, b.eq2), (Relation::Equal, Relation::Equal));
    }

    #[test]
    fn balanced_with_d_pool() {
        let totals = PoolTotals::new(400, 100, 400, 150);
        let case = classify_load_case(&totals).unwrap();
        assert_eq!(case, LoadCase::Balanced);
        let w = compute_weights(&totals, &case, WeightMode::Standard).unwrap();
        consistent(&w);
        let b = check_balance(&totals, &w);
        assert_eq!((b.eq1, b.eq2), (Relation::Equal, Relation::Equal));
    }

    #[test]
    fn case3b_three_way_balance() {
        let totals = PoolTotals::new(400, 300, 100, 250);
        let w = compute_weights(&totals, &LoadCase::Case3bES, WeightMode::Standard).unwrap();
        consistent(&w);
        assert_eq!(w.wmd, w.wgd);
        assert_eq!((w.wee, w.wme), (1.0, 0.0));
        // E + D == T/3 exactly: all of D goes to the exit position.
        assert!((w.wed - 1.0).abs() < 1e-12);
        assert!(w.notes.iter().any(|n| n == CASE_3B_CONVENTION));
        let b = check_balance(&totals, &w);
        assert_eq!((b.eq1, b.eq2), (Relation::Equal, Relation::Equal));
    }

    #[test]
    fn case3b_infeasible_when_guards_too_small() {
        // E < T/3 <= E+D but G + Wgd*D < T/3.
        let totals = PoolTotals::new(10, 500, 100, 400);
        assert_eq!(classify_load_case(&totals).unwrap(), LoadCase::Case3bES);
        assert!(matches!(
            compute_weights(&totals, &LoadCase::Case3bES, WeightMode::Standard),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn unsupported_case_errors() {
        let err = compute_weights(
            &PoolTotals::new(1, 1, 1, 1),
            &LoadCase::Unsupported("case 2".into()),
            WeightMode::Standard,
        );
        assert!(matches!(err, Err(Error::UnsupportedCase(s)) if s == "case 2"));
    }

    #[test]
    fn equalized_request_degrades_when_infeasible() {
        // Not a classified 3a network, but exercises the guard.
        let totals = PoolTotals::new(100, 50, 80, 40);
        let w = compute_weights(&totals, &LoadCase::Case3aESgtM, WeightMode::GuardExitEqualized).unwrap();
        assert_eq!(w.mode, WeightMode::Standard);
        assert_eq!(w.requested_mode, WeightMode::GuardExitEqualized);
        assert_eq!(w.wgg, 150.0 / 200.0);
        assert_eq!(w.notes.len(), 1);
    }

    #[test]
    fn balance_directions_case3a() {
        let totals = PoolTotals::new(6000, 4000, 1000, 500);
        let std = compute_weights(&totals, &LoadCase::Case3aESgtM, WeightMode::Standard).unwrap();
        let b = check_balance(&totals, &std);
        assert_eq!(b.eq1, Relation::Equal);
        assert_eq!(b.eq2, Relation::Greater);
        assert!(b.eq2_residual > 0.0);

        let eq = compute_weights(&totals, &LoadCase::Case3aESgtM, WeightMode::GuardExitEqualized).unwrap();
        let b = check_balance(&totals, &eq);
        assert_eq!(b.eq2, Relation::Equal);
        assert_eq!(b.eq1, Relation::Less);
    }

    #[test]
    fn zero_weights_report_residuals() {
        let totals = PoolTotals::new(10, 20, 30, 40);
        let w = PositionWeights {
            case: LoadCase::Balanced,
            mode: WeightMode::Standard,
            requested_mode: WeightMode::Standard,
            wgg: 0.0,
            wmg: 0.0,
            wee: 0.0,
            wme: 0.0,
            wgd: 0.0,
            wmd: 0.0,
            wed: 0.0,
            notes: vec![],
        };
        let b = check_balance(&totals, &w);
        assert_eq!(b.eq1_residual, -20.0);
        assert_eq!(b.eq2_residual, 0.0);
        assert_eq!(b.eq1, Relation::Less);
    }

    #[test]
    fn round_half_even_scaling() {
        assert_eq!(scale_weight(0.00005), 0);
        assert_eq!(scale_weight(0.00025), 2);
        assert_eq!(scale_weight(0.00035), 4);
        assert_eq!(scale_weight(0.00065), 6);
        assert_eq!(scale_weight(0.5), 5000);
        assert_eq!(scale_weight(1.0), 10000);
    }

    proptest! {
        #[test]
        fn case3a_standard_wgg_decreases_with_g(m in 1u64..1_000_000, g in 2u64..1_000_000, step in 1u64..1000) {
            prop_assume!(g > m);
            let case = LoadCase::Case3aESgtM;
            let w1 = compute_weights(&PoolTotals::new(g, m, 0, 0), &case, WeightMode::Standard).unwrap();
            let w2 = compute_weights(&PoolTotals::new(g + step, m, 0, 0), &case, WeightMode::Standard).unwrap();
            prop_assert!(w2.wgg < w1.wgg);
        }

        #[test]
        fn supported_cases_are_consistent(g in 0u64..100_000, m in 0u64..100_000, e in 0u64..100_000, d in 0u64..100_000) {
            let totals = PoolTotals::new(g, m, e, d);
            prop_assume!(totals.t() > 0);
            let case = classify_load_case(&totals).unwrap();
            for mode in [WeightMode::Standard, WeightMode::GuardExitEqualized] {
                match compute_weights(&totals, &case, mode) {
                    Ok(w) => {
                        consistent(&w);
                        let b = check_balance(&totals, &w);
                        match (&case, w.mode) {
                            (LoadCase::Case3aESgtM, WeightMode::Standard) => prop_assert_eq!(b.eq1, Relation::Equal),
                            (LoadCase::Case3aESgtM, WeightMode::GuardExitEqualized) => prop_assert_eq!(b.eq2, Relation::Equal),
                            _ => {
                                prop_assert_eq!(b.eq1, Relation::Equal);
                                prop_assert_eq!(b.eq2, Relation::Equal);
                            }
                        }
                    }
                    Err(Error::UnsupportedCase(_)) => prop_assert!(matches!(case, LoadCase::Unsupported(_))),
                    Err(Error::Infeasible(_)) => prop_assert!(matches!(case, LoadCase::Case3bES | LoadCase::Balanced)),
                    Err(other) => prop_assert!(false, "unexpected error {other}"),
                }
            }
        }
    }
}
