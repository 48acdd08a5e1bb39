use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::critic::{Critic, Experience, ReplayBuffer};
use super::policy::{ChainNoise, DiffusionPolicy};
use super::schedule::{DiffusionSchedule, ReverseVariance};
use crate::env::GameEnv;
use crate::error::{Error, Result};
use crate::log::{EpochRecord, TrainLog};
use crate::nn::{clip_grad_norm, Adam};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdmConfig {
    pub epochs: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub denoiser_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub diffusion_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub variance: ReverseVariance,
    /// Gaussian exploration on the normalized action, annealed linearly from
    /// `explore_start` to `explore_end` over the first half of training.
    pub explore_start: f64,
    pub explore_end: f64,
    /// Rounds per episode.
    pub horizon: usize,
    /// Bootstrap discount, used only when `horizon > 1`.
    pub discount: f64,
    pub grad_clip: f64,
    /// L2 penalty on the pre-squash action; keeps the actor out of the flat
    /// tails of the squash where the critic gradient vanishes.
    pub action_penalty: f64,
    /// Gradient steps per epoch for the critic and the actor.
    pub critic_steps: usize,
    pub actor_steps: usize,
}

impl Default for GdmConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            buffer_capacity: 2048,
            batch_size: 64,
            actor_lr: 1e-3,
            critic_lr: 1e-2,
            denoiser_hidden: vec![32, 32],
            critic_hidden: vec![64, 64],
            diffusion_steps: 5,
            beta_start: 1e-4,
            beta_end: 0.2,
            variance: ReverseVariance::Posterior,
            explore_start: 0.2,
            explore_end: 0.01,
            horizon: 1,
            discount: 0.95,
            grad_clip: 10.0,
            action_penalty: 3e-2,
            critic_steps: 4,
            actor_steps: 1,
        }
    }
}

impl GdmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("gdm: {what}")));
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        if self.explore_start < 0.0 || self.explore_end < 0.0 {
            return bad("exploration scales must be nonnegative");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.diffusion_steps, self.beta_start, self.beta_end)
    }

    pub fn exploration(&self, epoch: usize) -> f64 {
        let half = (self.epochs as f64 / 2.0).max(1.0);
        let frac = ((epoch as f64 - 1.0) / half).clamp(0.0, 1.0);
        if frac >= 1.0 {
            return self.explore_end;
        }
        self.explore_start + (self.explore_end - self.explore_start) * frac
    }
}

/// Diffusion policy, critic and everything their training loop owns.
#[derive(Clone, Debug)]
pub struct GdmAgent {
    pub policy: DiffusionPolicy,
    pub critic: Critic,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    config: GdmConfig,
}

impl GdmAgent {
    /// Fresh networks for an environment with `state_dim` features.
    pub fn new(state_dim: usize, config: GdmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = DiffusionPolicy::new(
            state_dim,
            &config.denoiser_hidden,
            config.schedule()?,
            config.variance,
            &mut rng,
        )?;
        let critic = Critic::new(state_dim, &config.critic_hidden, &mut rng)?;
        Self::from_parts(policy, critic, config, rng)
    }

    pub fn from_parts(
        policy: DiffusionPolicy,
        critic: Critic,
        config: GdmConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            actor_opt: Adam::new(policy.denoiser.n_params(), config.actor_lr)?,
            critic_opt: Adam::new(critic.q_net.n_params(), config.critic_lr)?,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            policy,
            critic,
            rng,
            config,
        })
    }

    pub fn config(&self) -> &GdmConfig {
        &self.config
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Run `config.epochs` epochs of interaction and learning.
    ///
    /// Each epoch executes one exploratory action, stores the transition,
    /// regresses the critic on a replay batch, then ascends the critic's value
    /// of freshly generated actions by differentiating through the reverse
    /// chain.
    pub fn train(&mut self, env: &mut GameEnv) -> Result<TrainLog> {
        self.check_env(env)?;
        let epochs = self.config.epochs;
        let mut log = TrainLog::with_capacity(epochs);
        let mut state = env.reset();
        let mut round = 0;
        for epoch in 1..=epochs {
            let features = env.features(&state);
            let unit = self.policy.sample_unit(&features, &mut self.rng)?;
            let jitter: f64 = self.rng.sample(StandardNormal);
            let executed = (unit + self.config.exploration(epoch) * jitter).clamp(-1.0, 1.0);
            let tr = env.step(&state, env.unit_to_price(executed))?;
            round += 1;
            let done = round >= self.config.horizon;
            let next_state = (!done).then(|| env.features(&tr.next));
            self.buffer.push(Experience {
                state: features,
                action: executed,
                reward: tr.reward,
                next_state,
            });

            let mut loss = 0.0;
            for k in 0..self.config.critic_steps {
                let l = self.critic_update(epoch)?;
                if k == 0 {
                    loss = l;
                }
            }
            for _ in 0..self.config.actor_steps {
                self.actor_update(epoch)?;
            }

            log.push(EpochRecord {
                epoch,
                price: tr.info.price.value(),
                server_utility: tr.info.server_utility,
                reward: tr.reward,
                loss,
            });
            state = if done {
                round = 0;
                env.reset()
            } else {
                tr.next
            };
        }
        Ok(log)
    }

    fn check_env(&self, env: &GameEnv) -> Result<()> {
        if env.feature_dim() != self.policy.state_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.policy.state_dim(),
                got: env.feature_dim(),
            });
        }
        Ok(())
    }

    /// One regression step of the critic; returns the batch MSE before the step.
    pub fn critic_update(&mut self, epoch: usize) -> Result<f64> {
        let batch: Vec<Experience> = self
            .buffer
            .sample(self.config.batch_size, &mut self.rng)
            .into_iter()
            .cloned()
            .collect();
        if batch.is_empty() {
            return Ok(0.0);
        }
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.critic.q_net.n_params()];
        let mut loss = 0.0;
        for exp in &batch {
            let mut target = exp.reward;
            if let Some(next) = &exp.next_state {
                let a_next = self.policy.sample_unit(next, &mut self.rng)?;
                target += self.config.discount * self.critic.value(next, a_next)?;
            }
            let q = self.critic.value(&exp.state, exp.action)?;
            let err = q - target;
            loss += err * err / n;
            self.critic
                .accumulate(&exp.state, exp.action, 2.0 * err / n, &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "critic loss is not finite".into(),
            });
        }
        clip_grad_norm(&mut grads, self.config.grad_clip);
        self.critic_opt
            .step(self.critic.q_net.params_mut(), &grads)
            .map_err(|e| Error::Diverged {
                epoch,
                what: e.to_string(),
            })?;
        Ok(loss)
    }

    /// One ascent step on `mean Q(s, π(s))` over a replay batch of states.
    pub fn actor_update(&mut self, epoch: usize) -> Result<()> {
        let states: Vec<Vec<f64>> = self
            .buffer
            .sample(self.config.batch_size, &mut self.rng)
            .into_iter()
            .map(|e| e.state.clone())
            .collect();
        if states.is_empty() {
            return Ok(());
        }
        let mut grads = actor_gradient(
            &self.policy,
            &self.critic,
            &states,
            self.config.action_penalty,
            &mut self.rng,
        )?;
        clip_grad_norm(&mut grads, self.config.grad_clip);
        self.actor_opt
            .step(self.policy.denoiser.params_mut(), &grads)
            .map_err(|e| Error::Diverged {
                epoch,
                what: e.to_string(),
            })
    }
}

/// Gradient of `mean_s [−Q(s, π(s)) + penalty·a₀²]` with respect to the
/// denoiser parameters, one reverse chain per state.
pub fn actor_gradient<R: Rng + ?Sized>(
    policy: &DiffusionPolicy,
    critic: &Critic,
    states: &[Vec<f64>],
    penalty: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut grads = vec![0.0; policy.denoiser.n_params()];
    let n = states.len() as f64;
    for s in states {
        let noise = ChainNoise::draw(policy.schedule.steps(), rng);
        let trace = policy.chain(s, &noise)?;
        let dq = critic.action_gradient(s, trace.unit)?;
        let d_pre = 2.0 * penalty * trace.pre_squash() / n;
        policy.backward_chain(s, &trace, -dq / n, d_pre, &mut grads)?;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_scenario, RewardMode, ScenarioRanges};
    use crate::nn::{max_relative_error, numeric_gradient};

    fn env() -> GameEnv {
        let s = sample_scenario(&ScenarioRanges::default(), 0).unwrap();
        let mode = RewardMode::raw_for(&s.market);
        GameEnv::new(s, mode, 0).unwrap()
    }

    #[test]
    fn zero_epochs_change_nothing() {
        let mut e = env();
        let cfg = GdmConfig {
            epochs: 0,
            ..GdmConfig::default()
        };
        let mut agent = GdmAgent::new(e.feature_dim(), cfg, 1).unwrap();
        let before = (agent.policy.clone(), agent.critic.clone());
        let log = agent.train(&mut e).unwrap();
        assert!(log.is_empty());
        assert_eq!(before, (agent.policy, agent.critic));
    }

    #[test]
    fn exploration_anneals_over_first_half() {
        let cfg = GdmConfig::default();
        assert_eq!(cfg.exploration(1), 0.2);
        assert!((cfg.exploration(251) - 0.01).abs() < 1e-12);
        assert_eq!(cfg.exploration(500), 0.01);
        assert!(cfg.exploration(100) < 0.2 && cfg.exploration(100) > 0.01);
    }

    #[test]
    fn actor_gradient_through_chain_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let schedule = DiffusionSchedule::linear(5, 1e-4, 0.2).unwrap();
        let policy =
            DiffusionPolicy::new(3, &[5], schedule, ReverseVariance::Beta, &mut rng).unwrap();
        let critic = Critic::new(3, &[6], &mut rng).unwrap();
        let states = vec![vec![0.1, 0.5, -0.3], vec![-0.6, 0.2, 0.9]];

        let penalty = 0.05;
        let g = actor_gradient(
            &policy,
            &critic,
            &states,
            penalty,
            &mut ChaCha8Rng::seed_from_u64(77),
        )
        .unwrap();
        let num = numeric_gradient(policy.denoiser.params(), 1e-5, |p| {
            let mut q = policy.clone();
            q.denoiser.params_mut().copy_from_slice(p);
            let mut r = ChaCha8Rng::seed_from_u64(77);
            let n = states.len() as f64;
            states
                .iter()
                .map(|s| {
                    let noise = ChainNoise::draw(5, &mut r);
                    let tr = q.chain(s, &noise).unwrap();
                    (-critic.value(s, tr.unit).unwrap() + penalty * tr.pre_squash().powi(2)) / n
                })
                .sum()
        });
        assert!(max_relative_error(&g, &num, 1e-3) <= 1e-3);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = GdmConfig {
            epochs: 30,
            ..GdmConfig::default()
        };
        let run = || {
            let mut e = env();
            let mut agent = GdmAgent::new(e.feature_dim(), cfg.clone(), 9).unwrap();
            agent.train(&mut e).unwrap()
        };
        let a = run();
        assert_eq!(a.len(), 30);
        assert_eq!(a, run());
        assert!(a.records.iter().all(|r| (0.01..=5.0).contains(&r.price)));
    }

    #[test]
    fn critic_learns_fixed_rewards() {
        // frozen random actor: fill the buffer once, then only train the critic
        let mut e = env();
        let cfg = GdmConfig::default();
        let mut agent = GdmAgent::new(e.feature_dim(), cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..256 {
            let st = e.reset();
            let f = e.features(&st);
            let u = agent.policy.sample_unit(&f, &mut rng).unwrap();
            let tr = e.step(&st, e.unit_to_price(u)).unwrap();
            agent.buffer.push(Experience {
                state: f,
                action: u,
                reward: tr.reward,
                next_state: None,
            });
        }
        let mse = |a: &GdmAgent| {
            let all: Vec<&Experience> = a.buffer.iter().collect();
            all.iter()
                .map(|x| (a.critic.value(&x.state, x.action).unwrap() - x.reward).powi(2))
                .sum::<f64>()
                / all.len() as f64
        };
        let initial = mse(&agent);
        for epoch in 1..=2000 {
            agent.critic_update(epoch).unwrap();
        }
        let trained = mse(&agent);
        assert!(trained * 10.0 <= initial, "{initial} -> {trained}");
    }

    #[test]
    fn mismatched_env_is_rejected() {
        let mut e = env();
        let mut agent = GdmAgent::new(3, GdmConfig::default(), 0).unwrap();
        assert!(agent.train(&mut e).is_err());
    }
}
