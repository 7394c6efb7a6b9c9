//! Prioritized experience replay over a sum tree.
//!
//! Transitions are sampled with probability proportional to their priority
//! `|td_error| + priority_floor`, and the induced bias is corrected with
//! importance-sampling weights `(len * P(i))^(-exponent)` normalized by the
//! largest weight in the drawn batch. New transitions enter at the largest
//! priority assigned so far so they are seen at least once before their own
//! temporal-difference error can demote them.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

/// One stored transition. State and action layouts are opaque to the buffer;
/// all rows in one buffer must share their lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    /// Observation the agent acted on.
    pub state: Vec<f64>,
    /// Executed action vector (the same encoding the critic consumes).
    pub action: Vec<f64>,
    /// Reward received for the transition.
    pub reward: f64,
    /// Observation after the environment advanced.
    pub next_state: Vec<f64>,
}

/// A batch drawn from the buffer, in matrix form ready for network passes.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    /// Buffer slots the rows came from (for priority refresh).
    pub indices: Vec<usize>,
    /// Normalized importance-sampling weights, max weight = 1.
    pub weights: Vec<f64>,
    /// One state per row.
    pub states: Array2<f64>,
    /// One action per row.
    pub actions: Array2<f64>,
    /// One reward per row.
    pub rewards: Array1<f64>,
    /// One successor state per row.
    pub next_states: Array2<f64>,
}

/// Complete binary tree of priority partial sums: leaves hold priorities,
/// inner node `i` holds `nodes[2i] + nodes[2i+1]`, the root holds the total.
/// Prefix-sum descent finds the leaf owning any point of the cumulative mass
/// in logarithmic time.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two().max(1);
        Self { leaves, nodes: vec![0.0; 2 * leaves] }
    }

    fn set(&mut self, index: usize, priority: f64) {
        debug_assert!(index < self.leaves);
        let mut node = self.leaves + index;
        self.nodes[node] = priority;
        node /= 2;
        while node >= 1 {
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
            node /= 2;
        }
    }

    fn get(&self, index: usize) -> f64 {
        self.nodes[self.leaves + index]
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf owning cumulative mass point `target` in `[0, total)`.
    fn find(&self, mut target: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if target < self.nodes[left] {
                node = left;
            } else {
                target -= self.nodes[left];
                node = left + 1;
            }
        }
        node - self.leaves
    }
}

/// Ring buffer of [`Experience`] with proportional prioritized sampling.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    capacity: usize,
    exponent: f64,
    priority_floor: f64,
    items: Vec<Experience>,
    write: usize,
    tree: SumTree,
    max_priority: f64,
}

impl PrioritizedBuffer {
    /// Creates an empty buffer.
    ///
    /// `exponent` is the importance-correction strength (0 disables the
    /// correction entirely: all weights become 1); `priority_floor` is added
    /// to every refreshed priority so no stored transition ever becomes
    /// unsampleable.
    pub fn new(capacity: usize, exponent: f64, priority_floor: f64) -> Self {
        assert!(capacity >= 1, "capacity must be at least 1");
        assert!(exponent >= 0.0, "exponent must be non-negative");
        assert!(priority_floor > 0.0, "priority floor must be positive");
        Self {
            capacity,
            exponent,
            priority_floor,
            items: Vec::new(),
            write: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
        }
    }

    /// Number of stored transitions (at most the capacity).
    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// True when nothing has been stored yet.
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Maximum number of transitions retained.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Current priority of slot `index`.
    pub fn priority(&self, index: usize) -> f64 {
        assert!(index < self.len(), "priority index out of range");
        self.tree.get(index)
    }

    /// Stored transition at slot `index`.
    pub fn get(&self, index: usize) -> &Experience {
        &self.items[index]
    }

    /// Appends a transition, evicting the oldest once full. It enters at the
    /// largest priority assigned so far, guaranteeing it a first draw.
    pub fn add(&mut self, experience: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(experience);
        } else {
            self.items[self.write] = experience;
        }
        self.tree.set(self.write, self.max_priority);
        self.write = (self.write + 1) % self.capacity;
    }

    /// Draws `batch_size` transitions (with replacement) with probability
    /// proportional to priority, along with max-normalized
    /// importance-sampling weights.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<SampledBatch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        assert!(batch_size >= 1, "batch size must be at least 1");
        let n = self.len();
        let total = self.tree.total();
        debug_assert!(total > 0.0, "stored priorities must be positive");

        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let target = rng.random_range(0.0..total);
            // Rounding in the prefix sums can land one past the last live
            // slot; clamp back onto stored items.
            let index = self.tree.find(target).min(n - 1);
            let prob = self.tree.get(index) / total;
            weights.push((n as f64 * prob).powf(-self.exponent));
            indices.push(index);
        }
        let max_w = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        debug_assert!(max_w.is_finite() && max_w > 0.0);
        for w in &mut weights {
            *w /= max_w;
        }

        let state_dim = self.items[indices[0]].state.len();
        let action_dim = self.items[indices[0]].action.len();
        let mut states = Array2::zeros((batch_size, state_dim));
        let mut actions = Array2::zeros((batch_size, action_dim));
        let mut rewards = Array1::zeros(batch_size);
        let mut next_states = Array2::zeros((batch_size, state_dim));
        for (row, &index) in indices.iter().enumerate() {
            let item = &self.items[index];
            states.row_mut(row).assign(&Array1::from_vec(item.state.clone()));
            actions.row_mut(row).assign(&Array1::from_vec(item.action.clone()));
            rewards[row] = item.reward;
            next_states.row_mut(row).assign(&Array1::from_vec(item.next_state.clone()));
        }
        Ok(SampledBatch { indices, weights, states, actions, rewards, next_states })
    }

    /// Refreshes the priorities of previously sampled slots from their new
    /// absolute temporal-difference errors.
    pub fn update_priorities(&mut self, indices: &[usize], abs_td_errors: &[f64]) {
        assert_eq!(indices.len(), abs_td_errors.len(), "index/error length mismatch");
        for (&index, &abs_td) in indices.iter().zip(abs_td_errors) {
            assert!(index < self.len(), "priority index out of range");
            assert!(abs_td.is_finite() && abs_td >= 0.0, "TD error must be finite and non-negative");
            let priority = abs_td + self.priority_floor;
            self.tree.set(index, priority);
            if priority > self.max_priority {
                self.max_priority = priority;
            }
        }
    }
}
