use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::GameEnv;
use crate::error::{Error, Result};
use crate::log::{EpochRecord, TrainLog};
use crate::nn::{clip_grad_norm, Activation, Adam, DenseNet};

pub const MIN_LOG_STD: f64 = -6.907_755_278_982_137; // ln 1e-3
pub const MAX_LOG_STD: f64 = 0.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub epochs: usize,
    /// Rollouts collected per update.
    pub batch_size: usize,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    /// Optimization passes over each batch.
    pub update_passes: usize,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub grad_clip: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 64,
            policy_lr: 3e-4,
            value_lr: 1e-3,
            clip: 0.2,
            entropy_coef: 0.01,
            update_passes: 4,
            policy_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            init_log_std: 0.0,
            grad_clip: 10.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("ppo: {what}")));
        if self.batch_size == 0 || self.update_passes == 0 {
            return bad("batch size and update passes must be positive");
        }
        if self.clip.is_nan() || self.clip <= 0.0 || self.entropy_coef < 0.0 {
            return bad("clip must be positive and entropy_coef nonnegative");
        }
        if !(MIN_LOG_STD..=MAX_LOG_STD).contains(&self.init_log_std) {
            return bad("init_log_std must give a std in [1e-3, 1]");
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

/// Gaussian over the pre-squash action, with a state-dependent mean and one
/// shared learnable log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: DenseNet,
    log_std: f64,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mean_net = DenseNet::mlp(state_dim, hidden, 1, Activation::Tanh, rng)?;
        Ok(Self {
            mean_net,
            log_std: log_std.clamp(MIN_LOG_STD, MAX_LOG_STD),
        })
    }

    pub fn log_std(&self) -> f64 {
        self.log_std
    }

    pub fn set_log_std(&mut self, v: f64) {
        self.log_std = v.clamp(MIN_LOG_STD, MAX_LOG_STD);
    }

    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }

    pub fn mean(&self, state: &[f64]) -> Result<f64> {
        Ok(self.mean_net.forward(state)?[0])
    }

    pub fn log_prob(&self, state: &[f64], x: f64) -> Result<f64> {
        let z = (x - self.mean(state)?) / self.std();
        Ok(-0.5 * z * z - self.log_std - 0.5 * (2.0 * std::f64::consts::PI).ln())
    }

    /// Pre-squash sample; the executed action is its `tanh`.
    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<f64> {
        let z: f64 = rng.sample(StandardNormal);
        Ok(self.mean(state)? + self.std() * z)
    }
}

/// One collected rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub state: Vec<f64>,
    /// Pre-squash action.
    pub action: f64,
    pub log_prob: f64,
    pub advantage: f64,
}

/// Negated clipped surrogate plus entropy bonus, averaged over the batch.
/// Returns the loss and its gradient: mean-net parameters followed by the
/// log-std entry.
pub fn surrogate_loss(
    policy: &GaussianPolicy,
    batch: &[Rollout],
    clip: f64,
    entropy_coef: f64,
) -> Result<(f64, Vec<f64>)> {
    let n_net = policy.mean_net.n_params();
    let mut grads = vec![0.0; n_net + 1];
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let n = batch.len() as f64;
    let var = policy.std() * policy.std();
    let mut loss = 0.0;
    for r in batch {
        let mu = policy.mean(&r.state)?;
        let diff = r.action - mu;
        let logp =
            -0.5 * diff * diff / var - policy.log_std - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let ratio = (logp - r.log_prob).exp();
        let unclipped = ratio * r.advantage;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * r.advantage;
        loss -= unclipped.min(clipped) / n;
        if unclipped <= clipped {
            // d(−ratio·A)/dθ = −A·ratio·∂logp/∂θ
            let w = -r.advantage * ratio / n;
            policy.mean_net.backward_accumulate(
                &r.state,
                &[w * diff / var],
                &mut grads[..n_net],
            )?;
            grads[n_net] += w * (diff * diff / var - 1.0);
        }
    }
    // Gaussian entropy is log σ + const.
    loss -= entropy_coef * policy.log_std;
    grads[n_net] -= entropy_coef;
    Ok((loss, grads))
}

/// Clipped-ratio actor–critic baseline over one-step episodes.
#[derive(Clone, Debug)]
pub struct PpoAgent {
    pub policy: GaussianPolicy,
    pub value_net: DenseNet,
    policy_opt: Adam,
    value_opt: Adam,
    rng: ChaCha8Rng,
    config: PpoConfig,
}

impl PpoAgent {
    pub fn new(state_dim: usize, config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(
            state_dim,
            &config.policy_hidden,
            config.init_log_std,
            &mut rng,
        )?;
        let value_net = DenseNet::mlp(
            state_dim,
            &config.value_hidden,
            1,
            Activation::Tanh,
            &mut rng,
        )?;
        Ok(Self {
            policy_opt: Adam::new(policy.mean_net.n_params() + 1, config.policy_lr)?,
            value_opt: Adam::new(value_net.n_params(), config.value_lr)?,
            policy,
            value_net,
            rng,
            config,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    /// Each epoch collects `batch_size` fresh rollouts, then runs
    /// `update_passes` full-batch steps on the policy and value net. The log
    /// records the first rollout of each batch and the value loss.
    pub fn train(&mut self, env: &mut GameEnv) -> Result<TrainLog> {
        if env.feature_dim() != self.policy.mean_net.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.policy.mean_net.input_dim(),
                got: env.feature_dim(),
            });
        }
        let epochs = self.config.epochs;
        let mut log = TrainLog::with_capacity(epochs);
        for epoch in 1..=epochs {
            let mut batch = Vec::with_capacity(self.config.batch_size);
            let mut rewards = Vec::with_capacity(self.config.batch_size);
            let mut first = None;
            for _ in 0..self.config.batch_size {
                let state = env.reset();
                let features = env.features(&state);
                let x = self.policy.sample(&features, &mut self.rng)?;
                let tr = env.step(&state, env.unit_to_price(x.tanh()))?;
                if first.is_none() {
                    first = Some((tr.info.price.value(), tr.info.server_utility, tr.reward));
                }
                let log_prob = self.policy.log_prob(&features, x)?;
                let advantage = tr.reward - self.value_net.forward(&features)?[0];
                rewards.push(tr.reward);
                batch.push(Rollout {
                    state: features,
                    action: x,
                    log_prob,
                    advantage,
                });
            }

            let mut value_loss = 0.0;
            for pass in 0..self.config.update_passes {
                let l = self.value_step(&batch, &rewards, epoch)?;
                if pass == 0 {
                    value_loss = l;
                }
                self.policy_step(&batch, epoch)?;
            }

            let (price, server_utility, reward) = first.expect("batch_size is positive");
            log.push(EpochRecord {
                epoch,
                price,
                server_utility,
                reward,
                loss: value_loss,
            });
        }
        Ok(log)
    }

    fn value_step(&mut self, batch: &[Rollout], rewards: &[f64], epoch: usize) -> Result<f64> {
        let n = batch.len() as f64;
        let mut grads = vec![0.0; self.value_net.n_params()];
        let mut loss = 0.0;
        for (r, &target) in batch.iter().zip(rewards) {
            let err = self.value_net.forward(&r.state)?[0] - target;
            loss += err * err / n;
            self.value_net
                .backward_accumulate(&r.state, &[2.0 * err / n], &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "value loss is not finite".into(),
            });
        }
        clip_grad_norm(&mut grads, self.config.grad_clip);
        self.value_opt
            .step(self.value_net.params_mut(), &grads)
            .map_err(|e| Error::Diverged {
                epoch,
                what: e.to_string(),
            })?;
        Ok(loss)
    }

    fn policy_step(&mut self, batch: &[Rollout], epoch: usize) -> Result<()> {
        let (loss, mut grads) = surrogate_loss(
            &self.policy,
            batch,
            self.config.clip,
            self.config.entropy_coef,
        )?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "policy loss is not finite".into(),
            });
        }
        clip_grad_norm(&mut grads, self.config.grad_clip);
        let mut params = self.policy.mean_net.params().to_vec();
        params.push(self.policy.log_std);
        self.policy_opt
            .step(&mut params, &grads)
            .map_err(|e| Error::Diverged {
                epoch,
                what: e.to_string(),
            })?;
        let log_std = params.pop().unwrap();
        self.policy.mean_net.params_mut().copy_from_slice(&params);
        self.policy.set_log_std(log_std);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_scenario, RewardMode, Scenario, ScenarioRanges};
    use crate::game::{DeviceProfile, MarketParams};
    use crate::nn::{max_relative_error, numeric_gradient};

    fn default_env(seed: u64) -> GameEnv {
        let s = sample_scenario(&ScenarioRanges::default(), seed).unwrap();
        let mode = RewardMode::raw_for(&s.market);
        GameEnv::new(s, mode, seed).unwrap()
    }

    #[test]
    fn zero_epochs_give_empty_log() {
        let mut env = default_env(0);
        let cfg = PpoConfig {
            epochs: 0,
            ..PpoConfig::default()
        };
        let mut agent = PpoAgent::new(env.feature_dim(), cfg, 0).unwrap();
        let before = agent.policy.clone();
        assert!(agent.train(&mut env).unwrap().is_empty());
        assert_eq!(agent.policy, before);
    }

    #[test]
    fn log_std_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = GaussianPolicy::new(3, &[4], 5.0, &mut rng).unwrap();
        assert_eq!(p.std(), 1.0);
        p.set_log_std(-50.0);
        assert!((p.std() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut policy = GaussianPolicy::new(3, &[5], -0.4, &mut rng).unwrap();
        let batch: Vec<Rollout> = (0..6)
            .map(|i| {
                let state = vec![0.1 * i as f64, -0.3, 0.5 - 0.2 * i as f64];
                let action = policy.sample(&state, &mut rng).unwrap();
                // old log-prob offset so some ratios differ from 1 but stay inside the clip band
                Rollout {
                    log_prob: policy.log_prob(&state, action).unwrap()
                        + 0.05 * (i as f64 - 2.5) / 2.5,
                    state,
                    action,
                    advantage: if i % 2 == 0 { 0.7 } else { -0.4 },
                }
            })
            .collect();
        let (_, analytic) = surrogate_loss(&policy, &batch, 0.2, 0.01).unwrap();
        let mut params = policy.mean_net.params().to_vec();
        params.push(policy.log_std());
        let numeric = numeric_gradient(&params, 1e-6, |p| {
            let n = p.len() - 1;
            policy.mean_net.params_mut().copy_from_slice(&p[..n]);
            policy.log_std = p[n];
            surrogate_loss(&policy, &batch, 0.2, 0.01).unwrap().0
        });
        assert!(max_relative_error(&analytic, &numeric, 1e-3) <= 1e-4);
    }

    #[test]
    fn clipped_samples_carry_no_policy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = GaussianPolicy::new(2, &[4], -0.5, &mut rng).unwrap();
        let state = vec![0.2, 0.4];
        let action = policy.mean(&state).unwrap() + 0.3;
        let logp = policy.log_prob(&state, action).unwrap();
        // ratio = e ≫ 1.2 with a positive advantage: clipped
        let batch = [Rollout {
            state,
            action,
            log_prob: logp - 1.0,
            advantage: 1.0,
        }];
        let (loss, g) = surrogate_loss(&policy, &batch, 0.2, 0.0).unwrap();
        assert!((loss + 1.2).abs() < 1e-12);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_rewards_leave_the_mean_in_place() {
        // β = 0 and large α: no device ever offloads, so every price pays F
        let market = MarketParams {
            beta: 0.0,
            ..MarketParams::default()
        };
        let devices = (0..market.n_devices)
            .map(|_| DeviceProfile::new(100.0, 1e6, &market).unwrap())
            .collect();
        let scenario = Scenario::new(market, devices, 0).unwrap();
        let mode = RewardMode::raw_for(&scenario.market);
        let mut env = GameEnv::new(scenario, mode, 0).unwrap();
        let cfg = PpoConfig {
            epochs: 200,
            ..PpoConfig::default()
        };
        let mut agent = PpoAgent::new(env.feature_dim(), cfg, 4).unwrap();
        let mut probe = env.clone();
        let states: Vec<Vec<f64>> = (0..32)
            .map(|_| {
                let s = probe.reset();
                probe.features(&s)
            })
            .collect();
        let mean_of = |a: &PpoAgent| {
            states
                .iter()
                .map(|s| a.policy.mean(s).unwrap())
                .sum::<f64>()
                / states.len() as f64
        };
        let before = mean_of(&agent);
        let log = agent.train(&mut env).unwrap();
        assert!(log.records.iter().all(|r| r.server_utility == 1000.0));
        let drift = (mean_of(&agent) - before).abs();
        assert!(drift < agent.policy.std(), "drift {drift}");
    }

    #[test]
    fn training_is_reproducible_and_in_bounds() {
        let cfg = PpoConfig {
            epochs: 20,
            ..PpoConfig::default()
        };
        let run = || {
            let mut env = default_env(1);
            PpoAgent::new(env.feature_dim(), cfg.clone(), 1)
                .unwrap()
                .train(&mut env)
                .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.len(), 20);
        assert!(a.records.iter().all(|r| (0.01..=5.0).contains(&r.price)));
    }
}
