//! Guessing entropy of a joint guard/exit distribution.
//!
//! The adversary compromises relays one at a time. A circuit is broken once
//! both its guard and its exit are compromised, so each new relay adds the
//! mass of the cells it pairs with already-compromised relays on the other
//! side. Picking greedily by that marginal gain gives the vector `q`, and the
//! guessing entropy is `g = sum(i * q_i)`.
//!
//! The first relay alone breaks nothing (`q_1 = 0`); it is chosen as one end
//! of the heaviest cell so that the second pick gains that cell.
//!
//! Ties: guards before exits, then the lowest index.

use serde::{Deserialize, Serialize};

use super::JointDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "G")]
    Guard,
    #[serde(rename = "E")]
    Exit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pick {
    pub side: Side,
    pub index: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessingTrace {
    pub q: Vec<f64>,
    pub picks: Vec<Pick>,
    pub g: f64,
}

impl GuessingTrace {
    /// Cumulative compromised mass after each pick.
    pub fn coverage(&self) -> Vec<f64> {
        self.q
            .iter()
            .scan(0.0, |acc, q| {
                *acc += q;
                Some(*acc)
            })
            .collect()
    }
}

fn best_unpicked(gain: &[f64], picked: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&v, &done)) in gain.iter().zip(picked).enumerate() {
        if !done && best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

struct Greedy<'a> {
    jd: &'a JointDistribution,
    // gain_g[x]: mass between guard x and compromised exits, and vice versa.
    gain_g: Vec<f64>,
    gain_e: Vec<f64>,
    picked_g: Vec<bool>,
    picked_e: Vec<bool>,
    q: Vec<f64>,
    picks: Vec<Pick>,
}

impl<'a> Greedy<'a> {
    fn new(jd: &'a JointDistribution) -> Self {
        let (n, k) = (jd.n_guards(), jd.n_exits());
        Greedy {
            jd,
            gain_g: vec![0.0; n],
            gain_e: vec![0.0; k],
            picked_g: vec![false; n],
            picked_e: vec![false; k],
            q: Vec::with_capacity(n + k),
            picks: Vec::with_capacity(n + k),
        }
    }

    fn take(&mut self, side: Side, index: usize) {
        let jd = self.jd;
        let fingerprint = match side {
            Side::Guard => {
                self.q.push(self.gain_g[index]);
                self.picked_g[index] = true;
                for (g, v) in self.gain_e.iter_mut().zip(jd.row(index)) {
                    *g += v;
                }
                jd.guards()[index].clone()
            }
            Side::Exit => {
                self.q.push(self.gain_e[index]);
                self.picked_e[index] = true;
                for (i, g) in self.gain_g.iter_mut().enumerate() {
                    *g += jd.get(i, index);
                }
                jd.exits()[index].clone()
            }
        };
        self.picks.push(Pick {
            side,
            index,
            fingerprint,
        });
    }

    fn next(&self) -> Option<(Side, usize)> {
        let best_g = best_unpicked(&self.gain_g, &self.picked_g);
        let best_e = best_unpicked(&self.gain_e, &self.picked_e);
        match (best_g, best_e) {
            (None, None) => None,
            (Some((i, _)), None) => Some((Side::Guard, i)),
            (None, Some((j, _))) => Some((Side::Exit, j)),
            (Some((i, vg)), Some((j, ve))) => Some(if vg >= ve {
                (Side::Guard, i)
            } else {
                (Side::Exit, j)
            }),
        }
    }
}

pub fn guessing_entropy(jd: &JointDistribution) -> GuessingTrace {
    // Heaviest cell; strict comparison keeps the lowest (guard, exit).
    let (mut seed_g, mut seed_e, mut seed_p) = (0, 0, f64::NEG_INFINITY);
    for i in 0..jd.n_guards() {
        for (j, &v) in jd.row(i).iter().enumerate() {
            if v > seed_p {
                (seed_g, seed_e, seed_p) = (i, j, v);
            }
        }
    }

    let mut greedy = Greedy::new(jd);
    greedy.take(Side::Guard, seed_g);
    greedy.take(Side::Exit, seed_e);
    while let Some((side, index)) = greedy.next() {
        greedy.take(side, index);
    }

    let Greedy { q, picks, .. } = greedy;
    let g = q.iter().enumerate().map(|(i, qi)| (i + 1) as f64 * qi).sum();
    GuessingTrace { q, picks, g }
}
