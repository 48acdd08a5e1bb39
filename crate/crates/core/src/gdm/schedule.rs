use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terminal signal level every standard schedule must reach.
pub const MAX_TERMINAL_ALPHA_BAR: f64 = 0.05;

/// Noise levels of a discrete diffusion process with steps `1..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Variance of the noise injected by each reverse step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseVariance {
    /// σ_t² = β_t
    Beta,
    /// σ_t² = β_t·(1 − ᾱ_{t−1})/(1 − ᾱ_t)
    #[default]
    Posterior,
}

impl DiffusionSchedule {
    /// Schedule from explicit noise increments. Only checks `0 < β_t < 1`;
    /// use [`DiffusionSchedule::linear`] for a schedule that also reaches the
    /// terminal noise level.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidParameter(
                "schedule needs at least one step".into(),
            ));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidParameter(
                "every beta must lie in (0, 1)".into(),
            ));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Linear increments from `beta_start` to `beta_end`, scaled up by one
    /// common factor when needed so that `ᾱ_T ≤ 0.05`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter(
                "schedule needs at least one step".into(),
            ));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidParameter(
                "need 0 < beta_start <= beta_end < 1".into(),
            ));
        }
        let base: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_end
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let terminal = |k: f64| base.iter().map(|b| 1.0 - k * b).product::<f64>();
        let mut scale = 1.0;
        if terminal(1.0) > MAX_TERMINAL_ALPHA_BAR {
            // ᾱ_T(k) falls monotonically to 0 as k → 1/β_end; bisect on k
            let (mut lo, mut hi) = (1.0, 1.0 / beta_end);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if terminal(mid) > MAX_TERMINAL_ALPHA_BAR {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            scale = hi;
        }
        let schedule = Self::from_betas(base.iter().map(|b| b * scale).collect())?;
        debug_assert!(schedule.terminal_alpha_bar() <= MAX_TERMINAL_ALPHA_BAR);
        Ok(schedule)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidParameter(format!(
                "diffusion step {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t, with ᾱ_0 = 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn terminal_alpha_bar(&self) -> f64 {
        *self.alpha_bars.last().unwrap()
    }

    pub fn sigma(&self, t: usize, variance: ReverseVariance) -> f64 {
        if t <= 1 {
            return 0.0;
        }
        match variance {
            ReverseVariance::Beta => self.beta(t).sqrt(),
            ReverseVariance::Posterior => {
                (self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))).sqrt()
            }
        }
    }

    /// Noise the clean action: `√ᾱ_t·a₀ + √(1 − ᾱ_t)·ε`.
    pub fn forward_noise(&self, action0: f64, t: usize, noise: f64) -> Result<f64> {
        let i = self.index(t)?;
        let ab = self.alpha_bars[i];
        Ok(ab.sqrt() * action0 + (1.0 - ab).sqrt() * noise)
    }

    /// Multiplier on `a_t` and on the predicted noise in one reverse step:
    /// `a_{t−1} = k·(a_t − c·ε̂) + σ_t·z` returns `(k, c)`.
    pub fn reverse_coefficients(&self, t: usize) -> (f64, f64) {
        let k = 1.0 / self.alpha(t).sqrt();
        let c = self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt();
        (k, c)
    }

    /// One reverse step given the predicted noise and the injected noise.
    pub fn reverse_step(&self, t: usize, a_t: f64, eps_hat: f64, sigma_z: f64) -> Result<f64> {
        self.index(t)?;
        let (k, c) = self.reverse_coefficients(t);
        Ok(k * (a_t - c * eps_hat) + sigma_z)
    }
}
