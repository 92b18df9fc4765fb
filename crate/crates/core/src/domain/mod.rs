//! Negotiation domains, bids and linear additive preference profiles.
//!
//! A [`Domain`] is an ordered list of discrete issues. A [`Bid`] picks one
//! value index per issue. A [`PreferenceProfile`] scores bids with a weighted
//! sum of per-issue evaluations, applies the time discount on agreement and
//! carries the reservation value credited on failure.

mod files;
mod frontier;
mod generate;
mod profile;

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use files::{
    parse_domain, parse_profile, write_domain, write_profile, DomainFile, ProfileFile,
};
pub(crate) use frontier::nondominated;
pub use frontier::{opposition, pareto_frontier, FrontierPoint, DEFAULT_ENUMERATION_CAP};
pub use generate::{gen_domain, write_generated, GenSpec, GeneratedScenario, OppositionClass};
pub use profile::{Additive, PreferenceProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub name: String,
    pub values: Vec<String>,
}

impl Issue {
    pub fn new(
        name: impl Into<String>,
        values: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    name: String,
    issues: Vec<Issue>,
}

impl Domain {
    pub fn new(name: impl Into<String>, issues: Vec<Issue>) -> Result<Self> {
        let name = name.into();
        if issues.is_empty() {
            return Err(Error::validation(format!("domain '{name}' has no issues")));
        }
        let mut seen = HashSet::new();
        for issue in &issues {
            if !seen.insert(issue.name.as_str()) {
                return Err(Error::validation(format!(
                    "issue names must be unique: '{}' repeated",
                    issue.name
                )));
            }
            if issue.values.is_empty() {
                return Err(Error::validation(format!(
                    "issue '{}' must have at least one discrete value",
                    issue.name
                )));
            }
            let mut labels = HashSet::new();
            for v in &issue.values {
                if !labels.insert(v.as_str()) {
                    return Err(Error::validation(format!(
                        "value labels must be unique within issue '{}': '{v}' repeated",
                        issue.name
                    )));
                }
            }
        }
        Ok(Self { name, issues })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn issues(&self) -> &[Issue] {
        &self.issues
    }

    pub fn n_issues(&self) -> usize {
        self.issues.len()
    }

    pub fn value_counts(&self) -> Vec<usize> {
        self.issues.iter().map(|i| i.values.len()).collect()
    }

    /// Size of the outcome space, saturating at `u64::MAX`.
    pub fn outcome_count(&self) -> u64 {
        self.issues
            .iter()
            .fold(1u64, |acc, i| acc.saturating_mul(i.values.len() as u64))
    }

    pub fn issue_index(&self, name: &str) -> Option<usize> {
        self.issues.iter().position(|i| i.name == name)
    }

    pub fn validate_bid(&self, bid: &Bid) -> Result<()> {
        if bid.len() != self.issues.len() {
            return Err(Error::InvalidBid(format!(
                "bid has {} values but domain '{}' has {} issues",
                bid.len(),
                self.name,
                self.issues.len()
            )));
        }
        for (i, (&v, issue)) in bid.values().iter().zip(&self.issues).enumerate() {
            if v >= issue.values.len() {
                return Err(Error::InvalidBid(format!(
                    "value index {v} out of range for issue {i} ('{}', {} values)",
                    issue.name,
                    issue.values.len()
                )));
            }
        }
        Ok(())
    }

    /// Decodes a mixed-radix outcome index; the last issue varies fastest.
    pub fn bid_at(&self, mut index: u64) -> Bid {
        let mut values = vec![0; self.issues.len()];
        for (slot, issue) in values.iter_mut().zip(&self.issues).rev() {
            let k = issue.values.len() as u64;
            *slot = (index % k) as usize;
            index /= k;
        }
        Bid(values)
    }

    pub fn index_of(&self, bid: &Bid) -> u64 {
        bid.values()
            .iter()
            .zip(&self.issues)
            .fold(0u64, |acc, (&v, issue)| {
                acc * issue.values.len() as u64 + v as u64
            })
    }

    /// Enumerates every bid in index order.
    pub fn bids(&self) -> impl Iterator<Item = Bid> + '_ {
        (0..self.outcome_count()).map(move |i| self.bid_at(i))
    }

    pub fn random_bid<R: Rng + ?Sized>(&self, rng: &mut R) -> Bid {
        Bid(self
            .issues
            .iter()
            .map(|i| rng.random_range(0..i.values.len()))
            .collect())
    }

    /// Value labels of a bid, in issue order.
    pub fn labels<'a>(&'a self, bid: &'a Bid) -> impl Iterator<Item = &'a str> + 'a {
        bid.values()
            .iter()
            .zip(&self.issues)
            .map(|(&v, issue)| issue.values[v].as_str())
    }
}

/// One value index per issue, in issue order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bid(Vec<usize>);

impl Bid {
    pub fn new(values: Vec<usize>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn value(&self, issue: usize) -> usize {
        self.0[issue]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn with_value(&self, issue: usize, value: usize) -> Bid {
        let mut values = self.0.clone();
        values[issue] = value;
        Bid(values)
    }

    pub fn set(&mut self, issue: usize, value: usize) {
        self.0[issue] = value;
    }
}

impl fmt::Display for Bid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain() -> Domain {
        Domain::new(
            "d",
            vec![
                Issue::new("a", ["x", "y"]),
                Issue::new("b", ["p", "q", "r"]),
                Issue::new("c", ["1", "2", "3", "4"]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn outcome_count_is_product() {
        assert_eq!(domain().outcome_count(), 24);
    }

    #[test]
    fn index_round_trip_covers_space() {
        let d = domain();
        let all: Vec<Bid> = d.bids().collect();
        assert_eq!(all.len(), 24);
        for (i, b) in all.iter().enumerate() {
            assert_eq!(d.index_of(b), i as u64);
            d.validate_bid(b).unwrap();
        }
        let unique: HashSet<_> = all.into_iter().collect();
        assert_eq!(unique.len(), 24);
    }

    #[test]
    fn rejects_duplicate_issue_names() {
        let err = Domain::new("d", vec![Issue::new("a", ["x"]), Issue::new("a", ["y"])]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_duplicate_labels_and_empty_issues() {
        assert!(Domain::new("d", vec![Issue::new("a", ["x", "x"])]).is_err());
        assert!(Domain::new("d", vec![Issue::new("a", Vec::<String>::new())]).is_err());
        assert!(Domain::new("d", vec![]).is_err());
    }

    #[test]
    fn validate_bid_checks_shape_and_range() {
        let d = domain();
        assert!(d.validate_bid(&Bid::new(vec![0, 0])).is_err());
        assert!(d.validate_bid(&Bid::new(vec![0, 3, 0])).is_err());
        assert!(d.validate_bid(&Bid::new(vec![1, 2, 3])).is_ok());
    }

    #[test]
    fn labels_follow_issue_order() {
        let d = domain();
        let bid = Bid::new(vec![1, 0, 3]);
        let labels: Vec<_> = d.labels(&bid).collect();
        assert_eq!(labels, ["y", "p", "4"]);
    }
}
