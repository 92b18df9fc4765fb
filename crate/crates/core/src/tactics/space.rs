use std::sync::Arc;

use rand::Rng;

use crate::domain::{Additive, Bid, Domain, PreferenceProfile};

/// Number of bids sampled when the outcome space is too large to enumerate.
pub const SAMPLE_POOL: usize = 50_000;

/// Bids sorted by own utility, for threshold queries.
///
/// Exhaustive when `|Ω|` fits under the cap, otherwise a uniform sample that
/// always contains the best bid.
#[derive(Debug, Clone)]
pub struct OutcomeSpace {
    domain: Arc<Domain>,
    entries: Vec<(f64, u64)>,
    best: Bid,
    exhaustive: bool,
}

impl OutcomeSpace {
    pub fn new<R: Rng + ?Sized>(profile: &PreferenceProfile, cap: u64, rng: &mut R) -> Self {
        let domain = profile.domain().clone();
        let size = domain.outcome_count();
        let best = profile.best_bid();
        let exhaustive = size <= cap;
        let mut entries: Vec<(f64, u64)> = if exhaustive {
            (0..size)
                .map(|i| (profile.score(&domain.bid_at(i)), i))
                .collect()
        } else {
            let mut v: Vec<(f64, u64)> = (0..SAMPLE_POOL)
                .map(|_| {
                    let bid = domain.random_bid(rng);
                    (profile.score(&bid), domain.index_of(&bid))
                })
                .collect();
            v.push((profile.score(&best), domain.index_of(&best)));
            v.sort_by_key(|e| e.1);
            v.dedup_by_key(|e| e.1);
            v
        };
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self {
            domain,
            entries,
            best,
            exhaustive,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn best(&self) -> &Bid {
        &self.best
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn min_utility(&self) -> f64 {
        self.entries.first().map_or(0.0, |e| e.0)
    }

    fn first_at_least(&self, threshold: f64) -> usize {
        self.entries.partition_point(|e| e.0 < threshold)
    }

    /// Lowest-utility bid at or above `target`; the best bid when none is.
    pub fn closest_above(&self, target: f64) -> (Bid, f64) {
        let i = self.first_at_least(target);
        let (u, idx) = self
            .entries
            .get(i)
            .or(self.entries.last())
            .copied()
            .unwrap_or((1.0, 0));
        (self.domain.bid_at(idx), u)
    }

    /// Number of bids with utility at or above `threshold`.
    pub fn count_at_least(&self, threshold: f64) -> usize {
        self.entries.len() - self.first_at_least(threshold)
    }

    /// Uniform draw among bids at or above `threshold`; the best bid when the
    /// set is empty.
    pub fn random_at_least<R: Rng + ?Sized>(&self, threshold: f64, rng: &mut R) -> Bid {
        let i = self.first_at_least(threshold);
        if i >= self.entries.len() {
            return self.best.clone();
        }
        let pick = rng.random_range(i..self.entries.len());
        self.domain.bid_at(self.entries[pick].1)
    }
}
