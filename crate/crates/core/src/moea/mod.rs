//! Two-objective bid generation: NSGA-II over the outcome space under
//! (own utility, estimated opponent utility), and TOPSIS selection.

mod nsga2;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::Bid;

pub use nsga2::{nsga2, population_size, Nsga2Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoMember {
    pub bid: Bid,
    pub own: f64,
    pub opp: f64,
}

#[cfg(test)]
impl ParetoMember {
    fn point(&self) -> (f64, f64) {
        (self.own, self.opp)
    }
}

/// Mutually non-dominated bids with both objective values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    members: Vec<ParetoMember>,
    pub generations: usize,
    /// Distinct bids whose objectives were computed.
    pub evaluations: usize,
}

impl ParetoSet {
    /// Keeps the non-dominated members, dropping duplicate bids. Ordered by
    /// descending own utility.
    pub fn from_members(members: Vec<ParetoMember>) -> Self {
        Self {
            members: nondominated_members(members),
            generations: 0,
            evaluations: 0,
        }
    }

    pub fn members(&self) -> &[ParetoMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// TOPSIS choice with weight `w` on own utility.
    ///
    /// Panics on an empty set.
    pub fn select(&self, w: f64) -> &ParetoMember {
        &self.members[topsis(&self.members, w).expect("empty Pareto set")]
    }
}

pub(crate) fn nondominated_members(mut members: Vec<ParetoMember>) -> Vec<ParetoMember> {
    members.sort_by(|p, q| {
        q.own
            .total_cmp(&p.own)
            .then(q.opp.total_cmp(&p.opp))
            .then(p.bid.cmp(&q.bid))
    });
    members.dedup_by(|a, b| a.bid == b.bid);
    let mut out: Vec<ParetoMember> = Vec::new();
    let mut best_opp = f64::NEG_INFINITY;
    let mut group_own = f64::NAN;
    let mut group_opp = f64::NAN;
    for m in members {
        if m.own == group_own {
            // same own utility: only ties with the group leader survive
            if m.opp == group_opp && out.last().is_some_and(|l| l.own == m.own && l.opp == m.opp) {
                out.push(m);
            }
            continue;
        }
        group_own = m.own;
        group_opp = m.opp;
        if m.opp > best_opp {
            best_opp = m.opp;
            out.push(m);
        }
    }
    out
}

fn dominates(p: (f64, f64), q: (f64, f64)) -> bool {
    p.0 >= q.0 && p.1 >= q.1 && (p.0 > q.0 || p.1 > q.1)
}

/// Fast non-dominated sorting (maximizing both coordinates). Each front lists
/// point indices in ascending order.
pub fn nondominated_sort(points: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(points[i], points[j]) {
                dominated[i].push(j);
                count[j] += 1;
            } else if dominates(points[j], points[i]) {
                dominated[j].push(i);
                count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated[i] {
                count[j] -= 1;
                if count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front`, in the same order. Boundary
/// points of either objective get infinity.
pub fn crowding_distance(points: &[(f64, f64)], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    for obj in 0..2 {
        let key = |k: usize| {
            if obj == 0 {
                points[front[k]].0
            } else {
                points[front[k]].1
            }
        };
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let (lo, hi) = (key(order[0]), key(order[m - 1]));
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        if hi > lo {
            for w in 1..m - 1 {
                dist[order[w]] += (key(order[w + 1]) - key(order[w - 1])) / (hi - lo);
            }
        }
    }
    dist
}

const TIE: f64 = 1e-12;

/// TOPSIS closeness coefficients for weights `(w, 1 − w)` on (own, opp).
pub fn topsis_scores(candidates: &[ParetoMember], w: f64) -> Vec<f64> {
    let w = w.clamp(0.0, 1.0);
    let column = |f: fn(&ParetoMember) -> f64, weight: f64| -> Vec<f64> {
        let xs: Vec<f64> = candidates.iter().map(f).collect();
        let norm = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let degenerate = xs.iter().all(|&x| x == xs[0]);
        if degenerate || norm == 0.0 {
            vec![0.0; xs.len()]
        } else {
            xs.iter().map(|x| weight * x / norm).collect()
        }
    };
    let own = column(|m| m.own, w);
    let opp = column(|m| m.opp, 1.0 - w);
    let range = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    };
    let (own_lo, own_hi) = range(&own);
    let (opp_lo, opp_hi) = range(&opp);
    own.iter()
        .zip(&opp)
        .map(|(&x, &y)| {
            let plus = ((own_hi - x).powi(2) + (opp_hi - y).powi(2)).sqrt();
            let minus = ((x - own_lo).powi(2) + (y - opp_lo).powi(2)).sqrt();
            if plus + minus == 0.0 {
                0.0
            } else {
                minus / (plus + minus)
            }
        })
        .collect()
}

/// Index of the TOPSIS choice; ties go to higher own utility, then the lower
/// bid index. `None` only for an empty slice.
pub fn topsis(candidates: &[ParetoMember], w: f64) -> Option<usize> {
    let scores = topsis_scores(candidates, w);
    (0..candidates.len()).max_by(|&i, &j| {
        let (a, b) = (&candidates[i], &candidates[j]);
        let by_score = if (scores[i] - scores[j]).abs() <= TIE {
            Ordering::Equal
        } else {
            scores[i].total_cmp(&scores[j])
        };
        by_score
            .then(a.own.total_cmp(&b.own))
            .then(b.bid.cmp(&a.bid))
    })
}
