//! Cost model of an encoder split between a device and the server.
//!
//! The device runs the front end plus the first `L` layers, then ships the
//! intermediate token sequence to the server, which runs the rest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCostProfile {
    /// Cost of layers 1..=l_max, in computation units.
    pub per_layer_cost: Vec<f64>,
    /// Embedding / front-end overhead.
    pub fixed_cost: f64,
    pub token_count: u64,
    pub hidden_dim: u64,
    pub bytes_per_element: u64,
}

/// Least-squares line through the cumulative cost curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coeff_a: f64,
    pub coeff_b: f64,
    pub max_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCost {
    pub device_cost: f64,
    pub server_cost: f64,
    pub payload_bytes: u64,
}

impl LayerCostProfile {
    /// Identical stacked layers with optional seeded uniform jitter in
    /// `[-jitter, jitter]` on each layer.
    pub fn synthetic(
        l_max: usize,
        layer_cost: f64,
        fixed_cost: f64,
        jitter: f64,
        seed: u64,
    ) -> Result<Self> {
        if jitter < 0.0 || jitter >= layer_cost {
            return Err(Error::InvalidParameter(
                "jitter must lie in [0, layer_cost)".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_layer_cost = (0..l_max)
            .map(|_| {
                if jitter > 0.0 {
                    layer_cost + rng.random_range(-jitter..=jitter)
                } else {
                    layer_cost
                }
            })
            .collect();
        let profile = Self {
            per_layer_cost,
            fixed_cost,
            // ViT-B/32 style: 49 patches + class token, 768-wide, fp32
            token_count: 50,
            hidden_dim: 768,
            bytes_per_element: 4,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_layer_cost.is_empty() {
            return Err(Error::InvalidParameter("profile has no layers".into()));
        }
        let bad = |v: f64| !v.is_finite() || v < 0.0;
        if bad(self.fixed_cost) || self.per_layer_cost.iter().any(|&c| bad(c)) {
            return Err(Error::InvalidParameter(
                "layer costs must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn l_max(&self) -> usize {
        self.per_layer_cost.len()
    }

    /// Cost of running the front end and the first `layers` layers.
    pub fn cumulative(&self, layers: usize) -> f64 {
        self.fixed_cost + self.per_layer_cost[..layers].iter().sum::<f64>()
    }

    /// Size of the intermediate activation shipped at the split point.
    pub fn payload_bytes(&self) -> u64 {
        self.token_count * self.hidden_dim * self.bytes_per_element
    }

    /// Fit `A·L + B` to the cumulative cost over `L = 0..=l_max`.
    pub fn fit_linear(&self) -> Result<LinearFit> {
        self.validate()?;
        if self.l_max() < 2 {
            return Err(Error::InvalidParameter(
                "a linear fit needs at least two layers".into(),
            ));
        }
        let ys: Vec<f64> = (0..=self.l_max()).map(|l| self.cumulative(l)).collect();
        if ys.iter().all(|&y| y == ys[0]) {
            return Err(Error::DegenerateProfile);
        }
        let n = ys.len() as f64;
        let x_mean = (n - 1.0) / 2.0;
        let y_mean = ys.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (x, &y) in ys.iter().enumerate() {
            let dx = x as f64 - x_mean;
            sxy += dx * (y - y_mean);
            sxx += dx * dx;
        }
        let coeff_a = sxy / sxx;
        let coeff_b = y_mean - coeff_a * x_mean;
        let max_residual = ys
            .iter()
            .enumerate()
            .map(|(x, &y)| (y - coeff_a * x as f64 - coeff_b).abs())
            .fold(0.0, f64::max);
        Ok(LinearFit {
            coeff_a,
            coeff_b,
            max_residual,
        })
    }

    pub fn split_cost(&self, split_at: usize) -> Result<SplitCost> {
        if split_at > self.l_max() {
            return Err(Error::InvalidParameter(format!(
                "split point {split_at} beyond {} layers",
                self.l_max()
            )));
        }
        let total = self.cumulative(self.l_max());
        let device_cost = self.cumulative(split_at);
        Ok(SplitCost {
            device_cost,
            server_cost: total - device_cost,
            payload_bytes: self.payload_bytes(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn profile(costs: Vec<f64>, fixed: f64) -> LayerCostProfile {
        LayerCostProfile {
            per_layer_cost: costs,
            fixed_cost: fixed,
            token_count: 50,
            hidden_dim: 768,
            bytes_per_element: 4,
        }
    }

    #[test]
    fn exact_line_is_recovered() {
        let fit = profile(vec![2.0; 40], 4.0).fit_linear().unwrap();
        assert_relative_eq!(fit.coeff_a, 2.0, max_relative = 1e-9);
        assert_relative_eq!(fit.coeff_b, 4.0, max_relative = 1e-9);
        assert!(fit.max_residual < 1e-9);
    }

    #[test]
    fn three_point_regression() {
        // points (0,0), (1,1), (2,4)
        let fit = profile(vec![1.0, 3.0], 0.0).fit_linear().unwrap();
        assert_relative_eq!(fit.coeff_a, 2.0, max_relative = 1e-12);
        assert_relative_eq!(fit.coeff_b, -1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(fit.max_residual, 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn noisy_profile_matches_normal_equations() {
        let noise = [0.3, -0.1, 0.0, 0.25, -0.4, 0.1];
        let p = profile(noise.iter().map(|e| 2.0 + e).collect(), 4.0);
        // solve [[Σ1, Σx],[Σx, Σx²]]·[B, A] = [Σy, Σxy] by Cramer's rule
        let pts: Vec<(f64, f64)> = (0..=noise.len())
            .map(|l| (l as f64, p.cumulative(l)))
            .collect();
        let s1 = pts.len() as f64;
        let sx: f64 = pts.iter().map(|q| q.0).sum();
        let sxx: f64 = pts.iter().map(|q| q.0 * q.0).sum();
        let sy: f64 = pts.iter().map(|q| q.1).sum();
        let sxy: f64 = pts.iter().map(|q| q.0 * q.1).sum();
        let det = s1 * sxx - sx * sx;
        let b = (sy * sxx - sx * sxy) / det;
        let a = (s1 * sxy - sx * sy) / det;

        let fit = p.fit_linear().unwrap();
        assert_relative_eq!(fit.coeff_a, a, max_relative = 1e-12);
        assert_relative_eq!(fit.coeff_b, b, max_relative = 1e-12);
        assert!(fit.max_residual > 0.0);
    }

    #[test]
    fn degenerate_and_short_profiles_fail() {
        assert!(matches!(
            profile(vec![0.0; 5], 3.0).fit_linear(),
            Err(Error::DegenerateProfile)
        ));
        assert!(profile(vec![1.0], 0.0).fit_linear().is_err());
        assert!(profile(vec![1.0, -1.0], 0.0).fit_linear().is_err());
    }

    #[test]
    fn split_boundaries_and_payload() {
        let p = profile(vec![2.0; 40], 4.0);
        let s0 = p.split_cost(0).unwrap();
        assert_eq!(s0.device_cost, 4.0);
        assert_eq!(s0.server_cost, 80.0);
        let s40 = p.split_cost(40).unwrap();
        assert_eq!(s40.server_cost, 0.0);
        assert_eq!(s40.payload_bytes, 153_600);
        assert!(p.split_cost(41).is_err());
    }

    #[test]
    fn synthetic_jitter_is_seeded() {
        let a = LayerCostProfile::synthetic(12, 2.0, 4.0, 0.2, 7).unwrap();
        let b = LayerCostProfile::synthetic(12, 2.0, 4.0, 0.2, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.per_layer_cost.iter().all(|c| (1.8..=2.2).contains(c)));
        assert!(LayerCostProfile::synthetic(12, 2.0, 4.0, 2.0, 7).is_err());
    }

    proptest! {
        #[test]
        fn split_conserves_total(costs in prop::collection::vec(0.01f64..10.0, 2..60), fixed in 0.0f64..20.0, frac in 0.0f64..=1.0) {
            let p = profile(costs, fixed);
            let at = (frac * p.l_max() as f64).round() as usize;
            let s = p.split_cost(at).unwrap();
            let total = p.cumulative(p.l_max());
            prop_assert!((s.device_cost + s.server_cost - total).abs() <= 1e-9 * total.max(1.0));
        }

        #[test]
        fn residual_ignores_constant_offset(costs in prop::collection::vec(0.01f64..10.0, 2..60), shift in 0.0f64..100.0) {
            let base = profile(costs.clone(), 1.0).fit_linear().unwrap();
            let moved = profile(costs, 1.0 + shift).fit_linear().unwrap();
            prop_assert!((base.max_residual - moved.max_residual).abs() <= 1e-9 * (1.0 + shift));
            prop_assert!((moved.coeff_b - base.coeff_b - shift).abs() <= 1e-9 * (1.0 + shift));
        }
    }
}
