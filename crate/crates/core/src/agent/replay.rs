use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::clustering::ActionId;
use crate::embeddings::StateMatrix;

/// One step of experience. States are shared between consecutive
/// transitions of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<StateMatrix>,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: Arc<StateMatrix>,
    pub done: bool,
    /// Candidate clusters of the next decision; empty when `done`.
    pub candidate_ids_next: Vec<ActionId>,
}

/// Bounded FIFO of transitions; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buffer.iter()
    }

    /// Up to `batch` distinct transitions chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        let n = batch.min(self.buffer.len());
        index::sample(rng, self.buffer.len(), n)
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect()
    }
}
