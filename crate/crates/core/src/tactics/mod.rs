//! Acceptance and bidding tactics, plus scripted baseline agents.
//!
//! Acceptance tactics return a utility threshold; the offer under
//! consideration is accepted when its own utility clears it. Bidding tactics
//! return a concrete bid.

mod baselines;
mod space;

use rand::Rng;

use crate::domain::{Bid, PreferenceProfile};
use crate::moea::ParetoSet;
use crate::opponent::FrequencyOpponentModel;

pub use baselines::{
    baseline, Acceptor, BaselineKind, Hardliner, RandomAgent, TimeDependent, TitForTat,
};
pub use space::{OutcomeSpace, SAMPLE_POOL};

pub const DEFAULT_FIXED_THRESHOLD: f64 = 0.6;
pub const BOULWARE_BETA: f64 = 0.2;
pub const LINEAR_BETA: f64 = 1.0;
pub const CONCEDER_BETA: f64 = 2.0;
/// Lower bound on the concession floor of time-dependent bidding.
pub const CONCESSION_FLOOR: f64 = 0.3;

/// Time-dependent concession curve `u_min + (1 − t^{1/β})(u_max − u_min)`.
pub fn concession_target(t: f64, beta: f64, u_min: f64, u_max: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    u_min + (1.0 - t.powf(1.0 / beta)) * (u_max - u_min)
}

/// Floor of the concession curve for a profile.
pub fn concession_floor(profile: &PreferenceProfile) -> f64 {
    profile.reservation().max(CONCESSION_FLOOR)
}

/// Everything a tactic may look at during one turn.
pub struct TacticContext<'a> {
    pub t: f64,
    pub profile: &'a PreferenceProfile,
    pub opponent: &'a FrequencyOpponentModel,
    pub space: &'a OutcomeSpace,
    /// Own utility of every bid received so far, in receipt order.
    pub received_utilities: &'a [f64],
    pub dynamic_threshold: f64,
    pub fixed_threshold: f64,
    pub last_received: Option<&'a Bid>,
    pub planned_bid: Option<&'a Bid>,
    pub pareto: Option<&'a ParetoSet>,
    pub boulware_beta: f64,
}

impl TacticContext<'_> {
    pub fn own_utility(&self, bid: &Bid) -> f64 {
        use crate::domain::Additive;
        self.profile.score(bid)
    }

    pub fn last_received_utility(&self) -> Option<f64> {
        self.received_utilities.last().copied()
    }
}

/// Nearest-rank quantile: the smallest received utility whose rank `r`
/// (ascending, 1-based) satisfies `r / m ≥ p`.
pub fn nearest_rank_quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let p = p.clamp(0.0, 1.0);
    let mut rank = ((p * m as f64).ceil() as usize).clamp(1, m);
    while rank > 1 && (rank - 1) as f64 / m as f64 >= p {
        rank -= 1;
    }
    while rank < m && (rank as f64 / m as f64) < p {
        rank += 1;
    }
    Some(sorted[rank - 1])
}

// --- acceptance-threshold tactics ---

/// Own utility of the bid this agent is about to propose.
pub fn next_bid_utility(ctx: &TacticContext) -> f64 {
    match ctx.planned_bid {
        Some(bid) => ctx.own_utility(bid),
        None => 1.0,
    }
}

/// `Q(clamp(a·t + b))` over own utilities of received bids; 1.0 while
/// nothing has been received.
pub fn quantile_threshold(ctx: &TacticContext, a: f64, b: f64) -> f64 {
    let p = (a * ctx.t + b).clamp(0.0, 1.0);
    nearest_rank_quantile(ctx.received_utilities, p).unwrap_or(1.0)
}

pub fn dynamic_threshold(ctx: &TacticContext) -> f64 {
    ctx.dynamic_threshold.clamp(ctx.profile.reservation(), 1.0)
}

pub fn fixed_threshold(ctx: &TacticContext) -> f64 {
    ctx.fixed_threshold
}

// --- bidding tactics ---

pub fn boulware_bid(ctx: &TacticContext, beta: f64) -> Bid {
    let target = concession_target(ctx.t, beta, concession_floor(ctx.profile), 1.0);
    ctx.space.closest_above(target).0
}

/// TOPSIS pick from the Pareto set with weight `clamp(a·t + b)` on own
/// utility. Falls back to Boulware bidding without a Pareto set.
pub fn pareto_bid(ctx: &TacticContext, a: f64, b: f64) -> Bid {
    let w = (a * ctx.t + b).clamp(0.0, 1.0);
    match ctx.pareto.filter(|ps| !ps.is_empty()) {
        Some(ps) => ps.select(w).bid.clone(),
        None => {
            log::debug!("no Pareto set available, falling back to Boulware bidding");
            boulware_bid(ctx, ctx.boulware_beta)
        }
    }
}

/// Copies the last received bid and moves its least relevant issue (lowest
/// own weight with at least two values) to a different random value.
pub fn greedy_opponent_bid<R: Rng + ?Sized>(ctx: &TacticContext, rng: &mut R) -> Bid {
    let Some(received) = ctx.last_received else {
        return boulware_bid(ctx, ctx.boulware_beta);
    };
    let Some(issue) = ctx.profile.least_relevant_issue(2) else {
        return received.clone();
    };
    let k = ctx.profile.domain().issues()[issue].values.len();
    let current = received.value(issue);
    let mut pick = rng.random_range(0..k - 1);
    if pick >= current {
        pick += 1;
    }
    received.with_value(issue, pick)
}

/// Uniform draw from the bids whose own utility is at least `ū_t`.
pub fn random_above<R: Rng + ?Sized>(ctx: &TacticContext, rng: &mut R) -> Bid {
    ctx.space.random_at_least(dynamic_threshold(ctx), rng)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::{gen_domain, Additive, Domain, GenSpec, Issue};
    use crate::moea::{ParetoMember, ParetoSet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        profile: PreferenceProfile,
        model: FrequencyOpponentModel,
        space: OutcomeSpace,
    }

    impl Fixture {
        fn new(profile: PreferenceProfile) -> Self {
            let model = FrequencyOpponentModel::new(profile.domain());
            let space = OutcomeSpace::new(&profile, 1_000_000, &mut ChaCha8Rng::seed_from_u64(0));
            Self {
                profile,
                model,
                space,
            }
        }

        fn ctx<'a>(&'a self, t: f64, received: &'a [f64]) -> TacticContext<'a> {
            TacticContext {
                t,
                profile: &self.profile,
                opponent: &self.model,
                space: &self.space,
                received_utilities: received,
                dynamic_threshold: 0.5,
                fixed_threshold: DEFAULT_FIXED_THRESHOLD,
                last_received: None,
                planned_bid: None,
                pareto: None,
                boulware_beta: BOULWARE_BETA,
            }
        }
    }

    fn fixture() -> Fixture {
        Fixture::new(gen_domain(&GenSpec::uniform(3, 4, 21)).unwrap().profile_a)
    }

    #[test]
    fn quantile_examples() {
        let v = [0.8, 0.2, 0.6, 0.4];
        assert_eq!(nearest_rank_quantile(&v, 0.5), Some(0.4));
        assert_eq!(nearest_rank_quantile(&v, 1.0), Some(0.8));
        assert_eq!(nearest_rank_quantile(&v, 0.0), Some(0.2));
        assert_eq!(nearest_rank_quantile(&[], 0.3), None);
        let f = fixture();
        let ctx = f.ctx(0.5, &v);
        // clamp(-2·0.5 + 0.2) = 0 → min
        assert_eq!(quantile_threshold(&ctx, -2.0, 0.2), 0.2);
        assert_eq!(quantile_threshold(&ctx, 0.0, 3.0), 0.8);
        assert_eq!(quantile_threshold(&f.ctx(0.5, &[]), 0.0, 0.5), 1.0);
    }

    // Linear scan over ranks; shares nothing with the implementation.
    fn rank_oracle(values: &[f64], p: f64) -> f64 {
        let mut s = values.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = s.len();
        for r in 1..=m {
            if r as f64 / m as f64 >= p {
                return s[r - 1];
            }
        }
        s[m - 1]
    }

    #[test]
    fn quantile_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let m = rng.random_range(1..30);
            let v: Vec<f64> = (0..m)
                .map(|_| (rng.random::<f64>() * 20.0).round() / 20.0)
                .collect();
            let p = if rng.random_bool(0.2) {
                (rng.random_range(0..=m) as f64) / m as f64
            } else {
                rng.random()
            };
            assert_eq!(
                nearest_rank_quantile(&v, p),
                Some(rank_oracle(&v, p)),
                "{v:?} p={p}"
            );
        }
    }

    #[test]
    fn fixed_and_dynamic_thresholds() {
        let f = fixture();
        let mut ctx = f.ctx(0.0, &[]);
        assert_eq!(fixed_threshold(&ctx), 0.6);
        ctx.fixed_threshold = 0.7;
        for t in [0.0, 0.4, 1.0] {
            ctx.t = t;
            assert_eq!(fixed_threshold(&ctx), 0.7);
        }
        ctx.dynamic_threshold = 10.0;
        assert_eq!(dynamic_threshold(&ctx), 1.0);
        ctx.dynamic_threshold = -10.0;
        assert_eq!(dynamic_threshold(&ctx), f.profile.reservation());
    }

    #[test]
    fn next_bid_utility_reads_planned_bid() {
        let f = fixture();
        let best = f.profile.best_bid();
        let mut ctx = f.ctx(0.0, &[]);
        ctx.planned_bid = Some(&best);
        assert_eq!(next_bid_utility(&ctx), 1.0);
        let other = Bid::new(vec![0, 0, 0]);
        ctx.planned_bid = Some(&other);
        assert_eq!(next_bid_utility(&ctx), f.profile.utility(&other).unwrap());
    }

    #[test]
    fn boulware_boundaries() {
        let f = fixture();
        let start = boulware_bid(&f.ctx(0.0, &[]), BOULWARE_BETA);
        assert_eq!(f.profile.utility(&start).unwrap(), 1.0);
        let end = boulware_bid(&f.ctx(1.0, &[]), BOULWARE_BETA);
        let u_end = f.profile.utility(&end).unwrap();
        let floor = concession_floor(&f.profile);
        assert!(u_end >= floor);
        // nothing sits strictly between the floor and the returned bid
        assert!(f.profile.domain().bids().all(|b| {
            let u = f.profile.score(&b);
            u < floor || u >= u_end
        }));
        let target = concession_target(0.5, 0.2, floor, 1.0);
        assert!((target - (floor + 0.96875 * (1.0 - floor))).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn boulware_target_non_increasing(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, beta in 0.05f64..0.99) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(concession_target(hi, beta, 0.3, 1.0) <= concession_target(lo, beta, 0.3, 1.0));
        }
    }

    fn pareto(members: &[(Bid, f64, f64)]) -> ParetoSet {
        ParetoSet::from_members(
            members
                .iter()
                .map(|(bid, own, opp)| ParetoMember {
                    bid: bid.clone(),
                    own: *own,
                    opp: *opp,
                })
                .collect(),
        )
    }

    #[test]
    fn pareto_bid_weights() {
        let f = fixture();
        let ps = pareto(&[
            (Bid::new(vec![0, 0, 0]), 0.9, 0.2),
            (Bid::new(vec![1, 1, 1]), 0.6, 0.6),
            (Bid::new(vec![2, 2, 2]), 0.3, 0.95),
        ]);
        let mut ctx = f.ctx(0.5, &[]);
        ctx.pareto = Some(&ps);
        assert_eq!(pareto_bid(&ctx, 0.0, 1.0), Bid::new(vec![0, 0, 0]));
        assert_eq!(pareto_bid(&ctx, 0.0, 0.0), Bid::new(vec![2, 2, 2]));
        // a = 2, b = 0 at t = 0.5 → w = 1
        assert_eq!(pareto_bid(&ctx, 2.0, 0.0), Bid::new(vec![0, 0, 0]));
        let single = pareto(&[(Bid::new(vec![3, 3, 3]), 0.5, 0.5)]);
        ctx.pareto = Some(&single);
        for w in [0.0, 0.3, 1.0] {
            assert_eq!(pareto_bid(&ctx, 0.0, w), Bid::new(vec![3, 3, 3]));
        }
        ctx.pareto = None;
        assert_eq!(
            pareto_bid(&ctx, 0.0, 0.5),
            boulware_bid(&ctx, BOULWARE_BETA)
        );
    }

    #[test]
    fn greedy_changes_least_relevant_issue() {
        let d = Arc::new(
            Domain::new(
                "g",
                vec![
                    Issue::new("x", ["a", "b", "c"]),
                    Issue::new("y", ["a", "b", "c"]),
                ],
            )
            .unwrap(),
        );
        let p = PreferenceProfile::new(
            d.clone(),
            vec![0.7, 0.3],
            vec![vec![1.0, 0.5, 0.0]; 2],
            0.0,
            1.0,
        )
        .unwrap();
        let f = Fixture::new(p);
        let received = Bid::new(vec![1, 2]);
        let mut ctx = f.ctx(0.3, &[]);
        ctx.last_received = Some(&received);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let bid = greedy_opponent_bid(&ctx, &mut rng);
            assert_eq!(bid.value(0), 1);
            assert_ne!(bid.value(1), 2);
            seen.insert(bid.value(1));
        }
        assert_eq!(seen.len(), 2);
        ctx.last_received = None;
        assert_eq!(
            greedy_opponent_bid(&ctx, &mut rng),
            boulware_bid(&ctx, BOULWARE_BETA)
        );
    }

    #[test]
    fn greedy_on_single_valued_domain_is_identity() {
        let d = Arc::new(
            Domain::new("s", vec![Issue::new("x", ["a"]), Issue::new("y", ["b"])]).unwrap(),
        );
        let p = PreferenceProfile::new(d, vec![0.5, 0.5], vec![vec![1.0], vec![1.0]], 0.0, 1.0)
            .unwrap();
        let f = Fixture::new(p);
        let received = Bid::new(vec![0, 0]);
        let mut ctx = f.ctx(0.3, &[]);
        ctx.last_received = Some(&received);
        assert_eq!(
            greedy_opponent_bid(&ctx, &mut ChaCha8Rng::seed_from_u64(0)),
            received
        );
    }

    #[test]
    fn greedy_skips_single_value_issue() {
        let d = Arc::new(
            Domain::new(
                "s",
                vec![Issue::new("x", ["a"]), Issue::new("y", ["a", "b"])],
            )
            .unwrap(),
        );
        let p =
            PreferenceProfile::new(d, vec![0.1, 0.9], vec![vec![1.0], vec![1.0, 0.0]], 0.0, 1.0)
                .unwrap();
        let f = Fixture::new(p);
        let received = Bid::new(vec![0, 0]);
        let mut ctx = f.ctx(0.3, &[]);
        ctx.last_received = Some(&received);
        assert_eq!(
            greedy_opponent_bid(&ctx, &mut ChaCha8Rng::seed_from_u64(0)),
            Bid::new(vec![0, 1])
        );
    }

    #[test]
    fn random_above_extremes() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ctx = f.ctx(0.3, &[]);
        ctx.dynamic_threshold = 1.0;
        for _ in 0..50 {
            assert_eq!(
                f.profile.utility(&random_above(&ctx, &mut rng)).unwrap(),
                1.0
            );
        }
        ctx.dynamic_threshold = 0.0;
        let mut seen = std::collections::HashSet::new();
        for _ in 0..5000 {
            seen.insert(random_above(&ctx, &mut rng));
        }
        assert_eq!(seen.len() as u64, f.profile.domain().outcome_count());
    }

    #[test]
    fn random_above_is_uniform() {
        // 12-bid domain; compare draw frequencies against the enumerated set
        let d = Arc::new(
            Domain::new(
                "u",
                vec![
                    Issue::new("x", ["a", "b", "c"]),
                    Issue::new("y", ["a", "b", "c", "d"]),
                ],
            )
            .unwrap(),
        );
        let p = PreferenceProfile::new(
            d.clone(),
            vec![0.5, 0.5],
            vec![vec![1.0, 0.6, 0.2], vec![1.0, 0.7, 0.4, 0.1]],
            0.0,
            1.0,
        )
        .unwrap();
        let f = Fixture::new(p);
        let mut ctx = f.ctx(0.3, &[]);
        ctx.dynamic_threshold = 0.5;
        let eligible: Vec<Bid> = d.bids().filter(|b| f.profile.score(b) >= 0.5).collect();
        let mut counts = std::collections::HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        for _ in 0..draws {
            let b = random_above(&ctx, &mut rng);
            assert!(f.profile.score(&b) >= 0.5);
            *counts.entry(b).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), eligible.len());
        let expected = draws as f64 / eligible.len() as f64;
        let chi2: f64 = eligible
            .iter()
            .map(|b| {
                let o = *counts.get(b).unwrap_or(&0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        // 99.9% critical value for up to 11 degrees of freedom
        assert!(chi2 < 31.26, "chi2 = {chi2} over {} bins", eligible.len());
    }

    proptest! {
        #[test]
        fn tactics_stay_in_range(seed in 0u64..300, t in 0.0f64..=1.0, a in -1.0f64..1.0, b in 0.0f64..1.5) {
            let s = gen_domain(&GenSpec::random_shape(seed, 1..=4, 1..=5)).unwrap();
            let f = Fixture::new(s.profile_a);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let received: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            let last = f.profile.domain().random_bid(&mut rng);
            let planned = f.profile.domain().random_bid(&mut rng);
            let mut ctx = f.ctx(t, &received);
            ctx.last_received = Some(&last);
            ctx.planned_bid = Some(&planned);
            ctx.dynamic_threshold = rng.random();
            for th in [next_bid_utility(&ctx), quantile_threshold(&ctx, a, b), dynamic_threshold(&ctx), fixed_threshold(&ctx)] {
                prop_assert!((0.0..=1.0).contains(&th));
            }
            let domain = f.profile.domain().clone();
            for bid in [boulware_bid(&ctx, 0.2), pareto_bid(&ctx, a, b), greedy_opponent_bid(&ctx, &mut rng), random_above(&ctx, &mut rng)] {
                prop_assert!(domain.validate_bid(&bid).is_ok());
            }
        }
    }
}
