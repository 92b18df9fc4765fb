use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Bounded FIFO memory of experiences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    batch: usize,
    state_dim: usize,
    action_dim: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    /// Requires `batch < capacity`.
    pub fn new(capacity: usize, batch: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if batch == 0 || batch >= capacity {
            return Err(Error::Config(format!(
                "replay sample size {batch} must be in 1..{capacity}"
            )));
        }
        Ok(Self {
            capacity,
            batch,
            state_dim,
            action_dim,
            items: VecDeque::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn ready(&self) -> bool {
        self.items.len() >= self.batch
    }

    /// Stores an experience, evicting the oldest when full.
    pub fn push(&mut self, e: Experience) -> Result<()> {
        if e.state.len() != self.state_dim || e.next_state.len() != self.state_dim {
            return Err(Error::Shape {
                expected: self.state_dim,
                got: e.state.len().max(e.next_state.len()),
            });
        }
        if e.action.len() != self.action_dim {
            return Err(Error::Shape {
                expected: self.action_dim,
                got: e.action.len(),
            });
        }
        if !(-1.0..=1.0).contains(&e.reward) {
            return Err(Error::validation(format!(
                "reward {} outside [-1, 1]",
                e.reward
            )));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
        Ok(())
    }

    /// `K` distinct experiences drawn uniformly; `None` until `K` are stored.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<&Experience>> {
        if !self.ready() {
            return None;
        }
        Some(
            index::sample(rng, self.items.len(), self.batch)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }
}
