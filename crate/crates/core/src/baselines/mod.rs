//! Comparison solvers: a clipped-ratio actor–critic and uniform random search.

mod ppo;
mod random;

pub use ppo::{
    surrogate_loss, GaussianPolicy, PpoAgent, PpoConfig, Rollout, MAX_LOG_STD, MIN_LOG_STD,
};
pub use random::{random_search, RandomPolicy};
