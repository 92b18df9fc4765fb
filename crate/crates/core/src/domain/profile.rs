use std::sync::Arc;

use crate::domain::{Bid, Domain};
use crate::error::{Error, Result};

/// Tolerance on the weight-sum invariant.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// A utility that decomposes into independent per-issue contributions.
///
/// Both the agent's own profile and the opponent model are additive, which
/// lets the bid generator reason issue by issue.
pub trait Additive {
    fn n_issues(&self) -> usize;

    /// Weighted contribution `w_i * e_i(v)` of `value` on `issue`.
    fn contribution(&self, issue: usize, value: usize) -> f64;

    /// Sum of contributions. The bid must already be valid for the domain.
    fn score(&self, bid: &Bid) -> f64 {
        bid.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.contribution(i, v))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceProfile {
    domain: Arc<Domain>,
    weights: Vec<f64>,
    evaluations: Vec<Vec<f64>>,
    reservation: f64,
    discount: f64,
}

impl PreferenceProfile {
    /// Builds a profile, normalizing each issue's evaluations so that its best
    /// value scores exactly 1.
    pub fn new(
        domain: Arc<Domain>,
        weights: Vec<f64>,
        mut evaluations: Vec<Vec<f64>>,
        reservation: f64,
        discount: f64,
    ) -> Result<Self> {
        let n = domain.n_issues();
        if weights.len() != n {
            return Err(Error::validation(format!(
                "expected {n} weights, got {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::validation(format!(
                "weights must be non-negative: weight {i} is {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::validation(format!(
                "weights must sum to 1 (±{WEIGHT_SUM_TOLERANCE:e}), got {sum}"
            )));
        }
        if evaluations.len() != n {
            return Err(Error::validation(format!(
                "expected evaluations for {n} issues, got {}",
                evaluations.len()
            )));
        }
        for (issue, evals) in domain.issues().iter().zip(evaluations.iter_mut()) {
            if evals.len() != issue.values.len() {
                return Err(Error::validation(format!(
                    "issue '{}' has {} values but {} evaluations",
                    issue.name,
                    issue.values.len(),
                    evals.len()
                )));
            }
            if evals.iter().any(|e| !e.is_finite() || *e < 0.0) {
                return Err(Error::validation(format!(
                    "evaluations of issue '{}' must be finite and non-negative",
                    issue.name
                )));
            }
            let max = evals.iter().copied().fold(0.0, f64::max);
            if max <= 0.0 {
                return Err(Error::validation(format!(
                    "issue '{}' has no positively evaluated value",
                    issue.name
                )));
            }
            if max != 1.0 {
                evals.iter_mut().for_each(|e| *e /= max);
            }
        }
        if !(0.0..=1.0).contains(&reservation) {
            return Err(Error::validation(format!(
                "reservation value must lie in [0, 1], got {reservation}"
            )));
        }
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::validation(format!(
                "discount factor must lie in [0, 1], got {discount}"
            )));
        }
        Ok(Self {
            domain,
            weights,
            evaluations,
            reservation,
            discount,
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn evaluations(&self) -> &[Vec<f64>] {
        &self.evaluations
    }

    pub fn evaluation(&self, issue: usize, value: usize) -> f64 {
        self.evaluations[issue][value]
    }

    pub fn reservation(&self) -> f64 {
        self.reservation
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn with_reservation(mut self, reservation: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reservation) {
            return Err(Error::validation(format!(
                "reservation value must lie in [0, 1], got {reservation}"
            )));
        }
        self.reservation = reservation;
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::validation(format!(
                "discount factor must lie in [0, 1], got {discount}"
            )));
        }
        self.discount = discount;
        Ok(self)
    }

    /// `Σ w_i · e_i(v_i)`.
    pub fn utility(&self, bid: &Bid) -> Result<f64> {
        self.domain.validate_bid(bid)?;
        Ok(self.score(bid))
    }

    /// Utility of an agreement reached at normalized time `t`: `U(ω) · d^t`.
    pub fn discounted_utility(&self, bid: &Bid, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidTime(t));
        }
        Ok(self.utility(bid)? * self.discount.powf(t))
    }

    /// The bid choosing every issue's best value (lowest index on ties).
    pub fn best_bid(&self) -> Bid {
        Bid::new(
            self.evaluations
                .iter()
                .map(|evals| {
                    evals
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (j, &e)| {
                            if e > best.1 {
                                (j, e)
                            } else {
                                best
                            }
                        })
                        .0
                })
                .collect(),
        )
    }

    /// Issue with the lowest weight among those with at least `min_values`
    /// values; ties go to the lowest index.
    pub fn least_relevant_issue(&self, min_values: usize) -> Option<usize> {
        self.domain
            .issues()
            .iter()
            .enumerate()
            .filter(|(_, issue)| issue.values.len() >= min_values)
            .fold(None, |best: Option<usize>, (i, _)| match best {
                Some(b) if self.weights[b] <= self.weights[i] => Some(b),
                _ => Some(i),
            })
    }
}

impl Additive for PreferenceProfile {
    fn n_issues(&self) -> usize {
        self.weights.len()
    }

    fn contribution(&self, issue: usize, value: usize) -> f64 {
        self.weights[issue] * self.evaluations[issue][value]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Issue;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_issue() -> PreferenceProfile {
        let d = Arc::new(
            Domain::new(
                "two",
                vec![
                    Issue::new("a", ["lo", "hi"]),
                    Issue::new("b", ["lo", "mid", "hi"]),
                ],
            )
            .unwrap(),
        );
        PreferenceProfile::new(
            d,
            vec![0.6, 0.4],
            vec![vec![0.0, 1.0], vec![0.0, 0.5, 1.0]],
            0.0,
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn best_bid_has_unit_utility() {
        let p = two_issue();
        assert_eq!(p.best_bid(), Bid::new(vec![1, 2]));
        assert_eq!(p.utility(&p.best_bid()).unwrap(), 1.0);
    }

    #[test]
    fn weighted_sum_example() {
        let p = two_issue();
        let u = p.utility(&Bid::new(vec![1, 1])).unwrap();
        assert!((u - 0.8).abs() < 1e-15);
    }

    #[test]
    fn discounting_examples() {
        let p = two_issue();
        let bid = Bid::new(vec![1, 1]);
        assert!((p.discounted_utility(&bid, 1.0).unwrap() - 0.72).abs() < 1e-12);
        assert!((p.discounted_utility(&bid, 0.5).unwrap() - 0.8 * 0.9f64.sqrt()).abs() < 1e-12);
        assert!((p.discounted_utility(&bid, 0.5).unwrap() - 0.758_946_638_440_411).abs() < 1e-12);
        assert_eq!(
            p.discounted_utility(&bid, 0.0).unwrap(),
            p.utility(&bid).unwrap()
        );
        let undiscounted = p.clone().with_discount(1.0).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert!((undiscounted.discounted_utility(&bid, t).unwrap() - 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_time_and_bid_are_rejected() {
        let p = two_issue();
        let bid = Bid::new(vec![0, 0]);
        assert!(matches!(
            p.discounted_utility(&bid, 1.5),
            Err(Error::InvalidTime(_))
        ));
        assert!(matches!(
            p.discounted_utility(&bid, -0.1),
            Err(Error::InvalidTime(_))
        ));
        assert!(matches!(
            p.utility(&Bid::new(vec![0])),
            Err(Error::InvalidBid(_))
        ));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let d = Arc::new(
            Domain::new("d", vec![Issue::new("a", ["x"]), Issue::new("b", ["y"])]).unwrap(),
        );
        let err = PreferenceProfile::new(d, vec![0.5, 0.4], vec![vec![1.0], vec![1.0]], 0.0, 1.0);
        assert!(matches!(err, Err(Error::Validation(m)) if m.contains("sum to 1")));
    }

    #[test]
    fn evaluations_are_normalized_to_unit_max() {
        let d = Arc::new(Domain::new("d", vec![Issue::new("a", ["x", "y"])]).unwrap());
        let p = PreferenceProfile::new(d, vec![1.0], vec![vec![2.0, 4.0]], 0.0, 1.0).unwrap();
        assert_eq!(p.evaluations()[0], vec![0.5, 1.0]);
    }

    #[test]
    fn least_relevant_issue_breaks_ties_low() {
        let p = two_issue();
        assert_eq!(p.least_relevant_issue(2), Some(1));
        let d = p.domain().clone();
        let tied =
            PreferenceProfile::new(d, vec![0.5, 0.5], p.evaluations().to_vec(), 0.0, 1.0).unwrap();
        assert_eq!(tied.least_relevant_issue(2), Some(0));
        assert_eq!(tied.least_relevant_issue(3), Some(1));
        assert_eq!(tied.least_relevant_issue(4), None);
    }

    proptest! {
        // Raising one issue's evaluation never lowers the utility.
        #[test]
        fn utility_is_monotone(seed in 0u64..500, issue in 0usize..3, bump in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Arc::new(Domain::new("m", vec![
                Issue::new("a", ["0", "1", "2"]),
                Issue::new("b", ["0", "1"]),
                Issue::new("c", ["0", "1", "2", "3"]),
            ]).unwrap());
            let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / s).collect();
            let w_sum: f64 = w.iter().sum();
            let mut w = w;
            w[2] += 1.0 - w_sum;
            let evals: Vec<Vec<f64>> = d.issues().iter()
                .map(|i| (0..i.values.len()).map(|_| rng.random::<f64>() * 0.9 + 0.05).collect())
                .collect();
            let p = PreferenceProfile::new(d.clone(), w.clone(), evals, 0.0, 1.0).unwrap();
            let bid = d.random_bid(&mut rng);
            let before = p.utility(&bid).unwrap();
            let mut raised = p.evaluations().to_vec();
            let v = bid.value(issue);
            raised[issue][v] = (raised[issue][v] + bump).min(1.0);
            let q = PreferenceProfile::new(d, w, raised, 0.0, 1.0).unwrap();
            prop_assert!(q.utility(&bid).unwrap() >= before - 1e-15);
        }
    }
}
