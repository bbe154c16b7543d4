//! Fixed-capacity FIFO replay buffer with uniform sampling.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::action::Action;
use crate::error::{contract, CoreError, Result};
use crate::observation::Observation;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

/// `(s, a, r, s', done)`; observations are shared so consecutive
/// transitions do not duplicate images.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Arc<Observation>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Arc<Observation>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return contract("replay capacity must be positive");
        }
        Ok(Self { items: VecDeque::new(), capacity, pushed: 0 })
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

    /// Total number of pushes since creation.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.reward.is_finite() {
            return contract("transition reward must be finite");
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.pushed += 1;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` i.i.d. uniform indices (with replacement) into the current contents.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(CoreError::State("cannot sample from an empty replay buffer".into()));
        }
        if n == 0 {
            return contract("sample size must be at least 1");
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(n, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}
