use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stored switcher transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayTransition {
    pub state: usize,
    /// Remaining budget before the step (budgeted loop only).
    pub remaining: Option<i64>,
    pub g: bool,
    /// False on persistence steps, where `g` was drawn but not used.
    pub consulted: bool,
    /// Environment reward after cost and penalty adjustments.
    pub reward: f64,
    pub next_state: usize,
    pub next_remaining: Option<i64>,
    /// The episode ended in a terminal state (no bootstrap).
    pub terminal: bool,
}

/// FIFO replay buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<ReplayTransition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn push(&mut self, t: ReplayTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
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

    pub fn iter(&self) -> impl Iterator<Item = &ReplayTransition> {
        self.items.iter()
    }

    /// `k` draws with replacement; empty when the buffer is.
    pub fn sample<'a, R: Rng>(&'a self, rng: &mut R, k: usize) -> Vec<&'a ReplayTransition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..k).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}
