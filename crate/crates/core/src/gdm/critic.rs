use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet};

/// Q-network over `(state features, normalized action)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub q_net: DenseNet,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self {
            q_net: DenseNet::mlp(state_dim + 1, hidden, 1, Activation::Silu, rng)?,
        })
    }

    fn input(state: &[f64], action: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(state.len() + 1);
        x.extend_from_slice(state);
        x.push(action);
        x
    }

    pub fn value(&self, state: &[f64], action: f64) -> Result<f64> {
        Ok(self.q_net.forward(&Self::input(state, action))?[0])
    }

    /// `∂Q/∂action`.
    pub fn action_gradient(&self, state: &[f64], action: f64) -> Result<f64> {
        let g = self.q_net.backward(&Self::input(state, action), &[1.0])?;
        Ok(*g.input.last().unwrap())
    }

    /// Add `upstream · ∂Q/∂θ` into `acc`.
    pub fn accumulate(
        &self,
        state: &[f64],
        action: f64,
        upstream: f64,
        acc: &mut [f64],
    ) -> Result<()> {
        self.q_net
            .backward_accumulate(&Self::input(state, action), &[upstream], acc)
            .map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    /// Executed action in normalized `[-1, 1]` space.
    pub action: f64,
    pub reward: f64,
    /// Following state, absent when the episode ended.
    pub next_state: Option<Vec<f64>>,
}

/// Fixed-capacity FIFO store of experiences.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, item: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
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

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Experience> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}
