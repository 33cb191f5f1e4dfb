//! Experience replay and the exploration schedule.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use super::Encoding;
use crate::mdp::ActionId;

/// One learning transition. `terminal` cuts bootstrapping; step-limit
/// cutoffs are stored as non-terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Encoding,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: Encoding,
    pub terminal: bool,
}

/// Bounded FIFO store of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, exp: Experience) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(exp);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.entries.iter()
    }

    /// Uniform sample of `batch` distinct entries (fewer if the buffer is
    /// smaller).
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<&Experience> {
        let amount = batch.min(self.entries.len());
        rand::seq::index::sample(rng, self.entries.len(), amount)
            .into_iter()
            .map(|i| &self.entries[i])
            .collect()
    }
}

/// Linear decay from `start` to `final_value` over `final_frame` frames,
/// then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub final_value: f64,
    pub final_frame: usize,
}

impl EpsilonSchedule {
    pub fn new(final_value: f64, final_frame: usize) -> Self {
        Self {
            start: 1.0,
            final_value,
            final_frame,
        }
    }

    pub fn value(&self, frame: usize) -> f64 {
        if self.final_frame == 0 || frame >= self.final_frame {
            return self.final_value;
        }
        let t = frame as f64 / self.final_frame as f64;
        self.start + (self.final_value - self.start) * t
    }
}
