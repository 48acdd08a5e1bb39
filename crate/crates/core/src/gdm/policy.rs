use rand::Rng;
use rand_distr::StandardNormal;

use super::schedule::{DiffusionSchedule, ReverseVariance};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet};

/// Width of the timestep embedding `[t/T, sin(πt/T), cos(πt/T)]`.
pub const TIME_EMBED_DIM: usize = 3;

pub fn time_embedding(t: usize, steps: usize) -> [f64; TIME_EMBED_DIM] {
    let x = t as f64 / steps as f64;
    let angle = std::f64::consts::PI * x;
    [x, angle.sin(), angle.cos()]
}

/// Random draws that fully determine one pass of the reverse chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainNoise {
    /// Prior sample `a_T`.
    pub terminal: f64,
    /// `z_t` for `t = T, T−1, …, 1`; the last entry is never used.
    pub z: Vec<f64>,
}

impl ChainNoise {
    pub fn draw<R: Rng + ?Sized>(steps: usize, rng: &mut R) -> Self {
        let terminal = rng.sample(StandardNormal);
        let z = (0..steps).map(|_| rng.sample(StandardNormal)).collect();
        Self { terminal, z }
    }
}

/// Values of one reverse pass, kept for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainTrace {
    /// `a_T, a_{T−1}, …, a_0`.
    pub actions: Vec<f64>,
    /// `tanh(a_0)`, the action in normalized `[-1, 1]` space.
    pub unit: f64,
}

impl ChainTrace {
    pub fn pre_squash(&self) -> f64 {
        *self.actions.last().unwrap()
    }
}

/// A price policy that generates its action by reverse diffusion, with a
/// denoiser conditioned on the state features.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionPolicy {
    pub denoiser: DenseNet,
    pub schedule: DiffusionSchedule,
    pub variance: ReverseVariance,
    state_dim: usize,
}

impl DiffusionPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        schedule: DiffusionSchedule,
        variance: ReverseVariance,
        rng: &mut R,
    ) -> Result<Self> {
        let denoiser = DenseNet::mlp(
            1 + TIME_EMBED_DIM + state_dim,
            hidden,
            1,
            Activation::Silu,
            rng,
        )?;
        Self::with_denoiser(denoiser, schedule, variance)
    }

    pub fn with_denoiser(
        denoiser: DenseNet,
        schedule: DiffusionSchedule,
        variance: ReverseVariance,
    ) -> Result<Self> {
        if denoiser.output_dim() != 1 || denoiser.input_dim() <= 1 + TIME_EMBED_DIM {
            return Err(Error::InvalidParameter(
                "denoiser must map (action, time, state) to one value".into(),
            ));
        }
        let state_dim = denoiser.input_dim() - 1 - TIME_EMBED_DIM;
        Ok(Self {
            denoiser,
            schedule,
            variance,
            state_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn denoiser_input(&self, a_t: f64, t: usize, state: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.denoiser.input_dim());
        x.push(a_t);
        x.extend_from_slice(&time_embedding(t, self.schedule.steps()));
        x.extend_from_slice(state);
        x
    }

    /// Run the reverse chain with fixed noise.
    pub fn chain(&self, state: &[f64], noise: &ChainNoise) -> Result<ChainTrace> {
        if state.len() != self.state_dim {
            return Err(Error::ShapeMismatch {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        let steps = self.schedule.steps();
        let mut actions = Vec::with_capacity(steps + 1);
        let mut a = noise.terminal;
        actions.push(a);
        for (i, t) in (1..=steps).rev().enumerate() {
            let eps = self.denoiser.forward(&self.denoiser_input(a, t, state))?[0];
            let sigma_z = self.schedule.sigma(t, self.variance) * noise.z[i];
            a = self.schedule.reverse_step(t, a, eps, sigma_z)?;
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("reverse diffusion at step {t}")));
            }
            actions.push(a);
        }
        Ok(ChainTrace {
            unit: a.tanh(),
            actions,
        })
    }

    /// Draw a normalized action in `[-1, 1]`.
    pub fn sample_unit<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<f64> {
        let noise = ChainNoise::draw(self.schedule.steps(), rng);
        Ok(self.chain(state, &noise)?.unit)
    }

    /// Accumulate `d_unit · ∂unit/∂θ + d_pre · ∂a₀/∂θ` into `acc` by
    /// backpropagating through every denoiser call of the chain.
    pub fn backward_chain(
        &self,
        state: &[f64],
        trace: &ChainTrace,
        d_unit: f64,
        d_pre: f64,
        acc: &mut [f64],
    ) -> Result<()> {
        let steps = self.schedule.steps();
        let mut grad = d_unit * (1.0 - trace.unit * trace.unit) + d_pre;
        for t in 1..=steps {
            let a_t = trace.actions[steps - t];
            let (k, c) = self.schedule.reverse_coefficients(t);
            let d_eps = -grad * k * c;
            let dx = self.denoiser.backward_accumulate(
                &self.denoiser_input(a_t, t, state),
                &[d_eps],
                acc,
            )?;
            grad = grad * k + dx[0];
        }
        Ok(())
    }
}

/// Reverse chain with an arbitrary noise predictor; returns the pre-squash
/// `a_0`.
pub fn sample_with<R, F>(
    schedule: &DiffusionSchedule,
    variance: ReverseVariance,
    rng: &mut R,
    mut denoise: F,
) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnMut(f64, usize) -> f64,
{
    let noise = ChainNoise::draw(schedule.steps(), rng);
    let mut a = noise.terminal;
    for (i, t) in (1..=schedule.steps()).rev().enumerate() {
        let sigma_z = schedule.sigma(t, variance) * noise.z[i];
        a = schedule.reverse_step(t, a, denoise(a, t), sigma_z)?;
    }
    Ok(a)
}
