use serde::{Deserialize, Serialize};

use crate::domain::{Additive, Bid, PreferenceProfile};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub bid: Bid,
    pub ua: f64,
    pub ub: f64,
}

fn check_cap(a: &PreferenceProfile, b: &PreferenceProfile, cap: u64) -> Result<u64> {
    if a.domain() != b.domain() {
        return Err(Error::validation(
            "profiles are defined over different domains",
        ));
    }
    let size = a.domain().outcome_count();
    if size > cap {
        return Err(Error::OracleUnavailable { size, cap });
    }
    Ok(size)
}

/// Exact Pareto frontier of the outcome space under `(U_A, U_B)`.
///
/// Bids sharing a non-dominated utility point are all returned. Output is
/// ordered by descending `U_A`.
pub fn pareto_frontier(
    a: &PreferenceProfile,
    b: &PreferenceProfile,
    cap: u64,
) -> Result<Vec<FrontierPoint>> {
    check_cap(a, b, cap)?;
    let points = a
        .domain()
        .bids()
        .map(|bid| FrontierPoint {
            ua: a.score(&bid),
            ub: b.score(&bid),
            bid,
        })
        .collect();
    Ok(nondominated(points))
}

/// Filters a point set down to its non-dominated members (maximizing both
/// coordinates) with a single sweep in descending `ua` order.
pub(crate) fn nondominated(mut points: Vec<FrontierPoint>) -> Vec<FrontierPoint> {
    points.sort_by(|p, q| q.ua.total_cmp(&p.ua).then(q.ub.total_cmp(&p.ub)));
    let mut out = Vec::new();
    let mut best_ub = f64::NEG_INFINITY;
    let mut i = 0;
    while i < points.len() {
        let mut j = i;
        while j < points.len() && points[j].ua == points[i].ua {
            j += 1;
        }
        // points[i] holds the group's maximal ub after the sort
        let group_max = points[i].ub;
        if group_max > best_ub {
            out.extend(points[i..j].iter().filter(|p| p.ub == group_max).cloned());
            best_ub = group_max;
        }
        i = j;
    }
    out
}

/// Minimum Euclidean distance from any outcome to the ideal point (1, 1).
pub fn opposition(a: &PreferenceProfile, b: &PreferenceProfile, cap: u64) -> Result<f64> {
    check_cap(a, b, cap)?;
    Ok(a.domain()
        .bids()
        .map(|bid| {
            let da = 1.0 - a.score(&bid);
            let db = 1.0 - b.score(&bid);
            (da * da + db * db).sqrt()
        })
        .fold(f64::INFINITY, f64::min))
}
