//! Frequency-based opponent model.
//!
//! Value preferences come from how often the opponent offers each value;
//! issue weights shift after every completed window of `W` bids: issues whose
//! value distribution stayed stable between the last two windows are judged
//! important and gain weight, damped as the deadline approaches.

use serde::{Deserialize, Serialize};

use crate::domain::{Additive, Bid, Domain};

pub const DEFAULT_WINDOW: usize = 5;
pub const EVALUATION_FLOOR: f64 = 0.01;
pub const STABILITY_THRESHOLD: f64 = 0.1;
pub const WEIGHT_INCREMENT: f64 = 0.1;
pub const PRIOR_UTILITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyOpponentModel {
    value_counts: Vec<Vec<u64>>,
    weights: Vec<f64>,
    window: Vec<Bid>,
    window_size: usize,
    previous_window: Option<Vec<Vec<f64>>>,
    observed: u64,
    completed_windows: u64,
}

impl FrequencyOpponentModel {
    pub fn new(domain: &Domain) -> Self {
        Self::with_window(domain, DEFAULT_WINDOW)
    }

    pub fn with_window(domain: &Domain, window_size: usize) -> Self {
        let n = domain.n_issues();
        Self {
            value_counts: domain
                .issues()
                .iter()
                .map(|i| vec![0; i.values.len()])
                .collect(),
            weights: vec![1.0 / n as f64; n],
            window: Vec::with_capacity(window_size),
            window_size: window_size.max(1),
            previous_window: None,
            observed: 0,
            completed_windows: 0,
        }
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.value_counts
    }

    pub fn completed_windows(&self) -> u64 {
        self.completed_windows
    }

    /// Records an opponent bid received at normalized time `t`.
    pub fn observe(&mut self, bid: &Bid, t: f64) {
        for (counts, &v) in self.value_counts.iter_mut().zip(bid.values()) {
            counts[v] += 1;
        }
        self.observed += 1;
        self.window.push(bid.clone());
        if self.window.len() == self.window_size {
            self.close_window(t);
        }
    }

    fn close_window(&mut self, t: f64) {
        let current: Vec<Vec<f64>> = self
            .value_counts
            .iter()
            .enumerate()
            .map(|(i, counts)| {
                let mut freq = vec![0.0; counts.len()];
                for bid in &self.window {
                    freq[bid.value(i)] += 1.0;
                }
                freq.iter_mut().for_each(|f| *f /= self.window.len() as f64);
                freq
            })
            .collect();
        if let Some(previous) = &self.previous_window {
            let mut changed = false;
            for (i, (now, before)) in current.iter().zip(previous).enumerate() {
                let tv: f64 = 0.5
                    * now
                        .iter()
                        .zip(before)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>();
                if tv < STABILITY_THRESHOLD {
                    self.weights[i] += WEIGHT_INCREMENT * (1.0 - t);
                    changed = true;
                }
            }
            if changed {
                let sum: f64 = self.weights.iter().sum();
                self.weights.iter_mut().for_each(|w| *w /= sum);
            }
        }
        self.previous_window = Some(current);
        self.window.clear();
        self.completed_windows += 1;
    }

    /// Estimated evaluation of `value` on `issue`: max-normalized frequency,
    /// floored at [`EVALUATION_FLOOR`].
    pub fn evaluation(&self, issue: usize, value: usize) -> f64 {
        let counts = &self.value_counts[issue];
        let max = counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return 1.0;
        }
        (counts[value] as f64 / max as f64).max(EVALUATION_FLOOR)
    }

    /// Estimated opponent utility; [`PRIOR_UTILITY`] before any observation.
    pub fn estimated_utility(&self, bid: &Bid) -> f64 {
        self.score(bid)
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model state is always serializable")
    }
}

impl Additive for FrequencyOpponentModel {
    fn n_issues(&self) -> usize {
        self.weights.len()
    }

    fn contribution(&self, issue: usize, value: usize) -> f64 {
        if self.observed == 0 {
            return PRIOR_UTILITY * self.weights[issue];
        }
        self.weights[issue] * self.evaluation(issue, value)
    }
}
