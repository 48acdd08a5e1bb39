//! Finite-difference checks of every analytic gradient the solvers rely on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{surrogate_loss, GaussianPolicy, PpoConfig, Rollout};
use crate::error::Result;
use crate::gdm::{
    actor_gradient, ChainNoise, Critic, DiffusionPolicy, DiffusionSchedule, GdmConfig,
    ReverseVariance, TIME_EMBED_DIM,
};
use crate::nn::{max_relative_error, numeric_gradient, Activation, DenseNet};

/// Tolerance for a single network's parameter and input gradients.
pub const NET_TOLERANCE: f64 = 1e-4;
/// Tolerance for the actor gradient through the whole reverse chain.
pub const CHAIN_TOLERANCE: f64 = 1e-3;
/// Denominator floor of the relative error.
pub const ERROR_FLOOR: f64 = 1e-3;
const STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub n_params: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

fn uniform_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Parameter and input gradients of a scalar-output net at a random input.
pub fn check_net<R: Rng>(name: &str, net: &DenseNet, rng: &mut R) -> Result<GradCheck> {
    let x = uniform_vec(net.input_dim(), rng);
    let up = uniform_vec(net.output_dim(), rng);
    let g = net.backward(&x, &up)?;
    let dot = |out: Vec<f64>| out.iter().zip(&up).map(|(o, u)| o * u).sum::<f64>();
    let mut probe = net.clone();
    let num_p = numeric_gradient(net.params(), STEP, |p| {
        probe.params_mut().copy_from_slice(p);
        dot(probe.forward(&x).unwrap())
    });
    let num_x = numeric_gradient(&x, STEP, |xi| dot(net.forward(xi).unwrap()));
    let err = max_relative_error(&g.params, &num_p, ERROR_FLOOR).max(max_relative_error(
        &g.input,
        &num_x,
        ERROR_FLOOR,
    ));
    Ok(GradCheck {
        name: name.to_string(),
        n_params: net.n_params(),
        max_rel_error: err,
        tolerance: NET_TOLERANCE,
    })
}

fn check_surrogate<R: Rng>(state_dim: usize, cfg: &PpoConfig, rng: &mut R) -> Result<GradCheck> {
    let mut policy = GaussianPolicy::new(state_dim, &cfg.policy_hidden, -0.5, rng)?;
    let batch: Vec<Rollout> = (0..8)
        .map(|i| {
            let state = uniform_vec(state_dim, rng);
            let action = policy.sample(&state, rng)?;
            Ok(Rollout {
                // ratios a few percent off 1, inside the clip band
                log_prob: policy.log_prob(&state, action)? + 0.03 * (i as f64 - 3.5) / 3.5,
                state,
                action,
                advantage: rng.random_range(-1.0..1.0),
            })
        })
        .collect::<Result<_>>()?;
    let (_, analytic) = surrogate_loss(&policy, &batch, cfg.clip, cfg.entropy_coef)?;
    let mut params = policy.mean_net.params().to_vec();
    params.push(policy.log_std());
    let numeric = numeric_gradient(&params, STEP, |p| {
        let n = p.len() - 1;
        policy.mean_net.params_mut().copy_from_slice(&p[..n]);
        policy.set_log_std(p[n]);
        surrogate_loss(&policy, &batch, cfg.clip, cfg.entropy_coef)
            .unwrap()
            .0
    });
    Ok(GradCheck {
        name: "ppo surrogate".into(),
        n_params: params.len(),
        max_rel_error: max_relative_error(&analytic, &numeric, ERROR_FLOOR),
        tolerance: NET_TOLERANCE,
    })
}

/// Actor loss `mean[−Q(s, tanh a₀) + penalty·a₀²]` differentiated through all
/// `T` denoiser calls, on a policy small enough for exhaustive differences.
pub fn check_actor_chain(seed: u64, variance: ReverseVariance) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = DiffusionSchedule::linear(5, 1e-4, 0.2)?;
    let policy = DiffusionPolicy::new(3, &[6], schedule, variance, &mut rng)?;
    let critic = Critic::new(3, &[6], &mut rng)?;
    let states: Vec<Vec<f64>> = (0..3).map(|_| uniform_vec(3, &mut rng)).collect();
    let penalty = 0.05;
    let noise_seed = seed.wrapping_add(1);
    let analytic = actor_gradient(
        &policy,
        &critic,
        &states,
        penalty,
        &mut ChaCha8Rng::seed_from_u64(noise_seed),
    )?;
    let mut probe = policy.clone();
    let numeric = numeric_gradient(policy.denoiser.params(), STEP, |p| {
        probe.denoiser.params_mut().copy_from_slice(p);
        let mut r = ChaCha8Rng::seed_from_u64(noise_seed);
        let n = states.len() as f64;
        states
            .iter()
            .map(|s| {
                let noise = ChainNoise::draw(probe.schedule.steps(), &mut r);
                let tr = probe.chain(s, &noise).unwrap();
                (-critic.value(s, tr.unit).unwrap() + penalty * tr.pre_squash().powi(2)) / n
            })
            .sum()
    });
    Ok(GradCheck {
        name: format!("actor through reverse chain ({variance:?})"),
        n_params: policy.denoiser.n_params(),
        max_rel_error: max_relative_error(&analytic, &numeric, ERROR_FLOOR),
        tolerance: CHAIN_TOLERANCE,
    })
}

/// Every architecture the default solvers build for a state of `state_dim`
/// features, plus the PPO surrogate and the actor chain.
pub fn check_all(
    state_dim: usize,
    gdm: &GdmConfig,
    ppo: &PpoConfig,
    seed: u64,
) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let denoiser = DenseNet::mlp(
        1 + TIME_EMBED_DIM + state_dim,
        &gdm.denoiser_hidden,
        1,
        Activation::Silu,
        &mut rng,
    )?;
    let critic = Critic::new(state_dim, &gdm.critic_hidden, &mut rng)?;
    let ppo_mean = GaussianPolicy::new(state_dim, &ppo.policy_hidden, 0.0, &mut rng)?.mean_net;
    let ppo_value = DenseNet::mlp(state_dim, &ppo.value_hidden, 1, Activation::Tanh, &mut rng)?;
    let mut out = vec![
        check_net("gdm denoiser", &denoiser, &mut rng)?,
        check_net("gdm critic", &critic.q_net, &mut rng)?,
        check_net("ppo policy mean", &ppo_mean, &mut rng)?,
        check_net("ppo value", &ppo_value, &mut rng)?,
        check_surrogate(state_dim, ppo, &mut rng)?,
    ];
    for variance in [ReverseVariance::Beta, ReverseVariance::Posterior] {
        out.push(check_actor_chain(seed, variance)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architectures_pass() {
        let checks = check_all(11, &GdmConfig::default(), &PpoConfig::default(), 0).unwrap();
        assert_eq!(checks.len(), 7);
        for c in &checks {
            assert!(c.passed(), "{}: {:.3e}", c.name, c.max_rel_error);
        }
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::mlp(3, &[4], 1, Activation::Tanh, &mut rng).unwrap();
        let x = [0.3, -0.2, 0.5];
        let mut g = net.backward(&x, &[1.0]).unwrap().params;
        g[0] += 0.1;
        let num = numeric_gradient(net.params(), STEP, |p| {
            let mut q = net.clone();
            q.params_mut().copy_from_slice(p);
            q.forward(&x).unwrap()[0]
        });
        assert!(max_relative_error(&g, &num, ERROR_FLOOR) > NET_TOLERANCE);
    }
}
