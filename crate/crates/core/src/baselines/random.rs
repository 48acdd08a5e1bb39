use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::GameEnv;
use crate::log::{EpochRecord, TrainLog};
use crate::Result;

/// Uniform in-bounds price, drawn independently each epoch.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, price_min: f64, price_max: f64) -> f64 {
        if price_min < price_max {
            self.rng.random_range(price_min..=price_max)
        } else {
            price_min
        }
    }
}

/// Logs the utility of the current sample, not the best so far.
pub fn random_search(env: &mut GameEnv, epochs: usize, seed: u64) -> Result<TrainLog> {
    let mut policy = RandomPolicy::new(seed);
    let mut log = TrainLog::with_capacity(epochs);
    for epoch in 1..=epochs {
        let state = env.reset();
        let m = env.market();
        let price = policy.sample(m.price_min, m.price_max);
        let tr = env.step(&state, price)?;
        log.push(EpochRecord {
            epoch,
            price: tr.info.price.value(),
            server_utility: tr.info.server_utility,
            reward: tr.reward,
            loss: 0.0,
        });
    }
    Ok(log)
}
