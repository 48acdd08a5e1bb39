//! Round-based decision environment around the pricing game.
//!
//! The leader observes the previous round's price and layer vector, posts a
//! new price, and is rewarded according to the configured [`RewardMode`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{self, DeviceProfile, EquilibriumSolution, MarketParams, Price};

/// Sampling ranges for a scenario. Device parameters are drawn uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRanges {
    pub market: MarketParams,
    pub capacity: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        Self {
            market: MarketParams::default(),
            capacity: (90.0, 120.0),
            alpha: (5.0, 15.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub market: MarketParams,
    pub devices: Vec<DeviceProfile>,
    pub seed: u64,
}

impl Scenario {
    pub fn new(market: MarketParams, devices: Vec<DeviceProfile>, seed: u64) -> Result<Self> {
        let s = Self {
            market,
            devices,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if self.devices.len() != self.market.n_devices {
            return Err(Error::InvalidParameter(format!(
                "{} devices for a market of {}",
                self.devices.len(),
                self.market.n_devices
            )));
        }
        if self.devices.is_empty() {
            return Err(Error::NoDevices);
        }
        self.devices
            .iter()
            .try_for_each(|d| d.validate(&self.market))
    }

    pub fn respond(&self, price: Price) -> EquilibriumSolution {
        game::respond(&self.devices, price, &self.market)
    }
}

impl ScenarioRanges {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        for (name, (lo, hi)) in [("capacity", self.capacity), ("alpha", self.alpha)] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "{name} range [{lo}, {hi}] is inverted or not finite"
                )));
            }
        }
        if self.capacity.0 <= self.market.coeff_b {
            return Err(Error::InvalidParameter(format!(
                "capacity range must start above the fixed cost {}",
                self.market.coeff_b
            )));
        }
        if self.alpha.0 < 0.0 {
            return Err(Error::InvalidParameter(
                "alpha range must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Draw a scenario. The same `(ranges, seed)` always yields the same devices.
pub fn sample_scenario(ranges: &ScenarioRanges, seed: u64) -> Result<Scenario> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let devices = (0..ranges.market.n_devices)
        .map(|_| {
            let capacity = rng.random_range(ranges.capacity.0..=ranges.capacity.1);
            let alpha = rng.random_range(ranges.alpha.0..=ranges.alpha.1);
            DeviceProfile::new(capacity, alpha, &ranges.market)
        })
        .collect::<Result<Vec<_>>>()?;
    Scenario::new(ranges.market.clone(), devices, seed)
}

/// The observation `{p, L_1, …, L_N}` of the previous round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub price_prev: Price,
    pub layer_prev: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RewardMode {
    /// Server utility divided by `scale`.
    RawUtility { scale: f64 },
    /// 1 when the server utility strictly improves on the previous round, else 0.
    BinaryImprovement,
}

impl RewardMode {
    pub fn raw_for(market: &MarketParams) -> Self {
        RewardMode::RawUtility {
            scale: market.revenue_f,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardMode::RawUtility { scale } if !(scale > 0.0 && scale.is_finite()) => Err(
                Error::InvalidParameter("reward scale must be positive".into()),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub next: GameState,
    pub reward: f64,
    pub info: EquilibriumSolution,
}

/// How a normalized action in `[-1, 1]` maps onto the price interval.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceScale {
    /// Affine in the price.
    Linear,
    /// Affine in the log price; needs `price_min > 0`.
    #[default]
    Log,
}

/// One environment instance; owns its own random stream for resets.
#[derive(Clone, Debug)]
pub struct GameEnv {
    scenario: Scenario,
    reward_mode: RewardMode,
    price_scale: PriceScale,
    rng: ChaCha8Rng,
}

impl GameEnv {
    pub fn new(scenario: Scenario, reward_mode: RewardMode, seed: u64) -> Result<Self> {
        scenario.validate()?;
        reward_mode.validate()?;
        let price_scale = if scenario.market.price_min > 0.0 {
            PriceScale::Log
        } else {
            PriceScale::Linear
        };
        Ok(Self {
            scenario,
            reward_mode,
            price_scale,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_price_scale(mut self, scale: PriceScale) -> Result<Self> {
        if scale == PriceScale::Log && self.scenario.market.price_min <= 0.0 {
            return Err(Error::InvalidParameter(
                "log price scale needs a positive price_min".into(),
            ));
        }
        self.price_scale = scale;
        Ok(self)
    }

    pub fn price_scale(&self) -> PriceScale {
        self.price_scale
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn market(&self) -> &MarketParams {
        &self.scenario.market
    }

    pub fn reward_mode(&self) -> RewardMode {
        self.reward_mode
    }

    pub fn n_devices(&self) -> usize {
        self.scenario.devices.len()
    }

    /// Width of [`GameEnv::features`].
    pub fn feature_dim(&self) -> usize {
        self.n_devices() + 1
    }

    /// Random in-bounds price with every follower best-responding to it.
    pub fn reset(&mut self) -> GameState {
        let m = &self.scenario.market;
        let price = if m.price_min < m.price_max {
            m.clamp_price(self.rng.random_range(m.price_min..m.price_max))
        } else {
            m.clamp_price(m.price_min)
        };
        let layer_prev = self.scenario.respond(price).layers;
        GameState {
            price_prev: price,
            layer_prev,
        }
    }

    /// Followers respond to `action`; deterministic in its inputs.
    pub fn step(&self, state: &GameState, action: f64) -> Result<Transition> {
        let m = &self.scenario.market;
        let price = m.price(action)?;
        let info = self.scenario.respond(price);
        let reward = match self.reward_mode {
            RewardMode::RawUtility { scale } => info.server_utility / scale,
            RewardMode::BinaryImprovement => {
                let before = game::server_utility(state.price_prev, &state.layer_prev, m);
                if info.server_utility > before {
                    1.0
                } else {
                    0.0
                }
            }
        };
        Ok(Transition {
            next: GameState {
                price_prev: price,
                layer_prev: info.layers.clone(),
            },
            reward,
            info,
        })
    }

    /// `[price scaled to [-1, 1], L_1/l_max, …, L_N/l_max]`.
    pub fn features(&self, state: &GameState) -> Vec<f64> {
        let m = &self.scenario.market;
        let span = m.price_max - m.price_min;
        let price = if span > 0.0 {
            2.0 * (state.price_prev.value() - m.price_min) / span - 1.0
        } else {
            0.0
        };
        let l_max = f64::from(m.l_max);
        std::iter::once(price)
            .chain(state.layer_prev.iter().map(|&l| f64::from(l) / l_max))
            .collect()
    }

    /// Map a normalized action in `[-1, 1]` onto the price interval.
    pub fn unit_to_price(&self, unit: f64) -> f64 {
        let m = &self.scenario.market;
        let frac = 0.5 * (unit.clamp(-1.0, 1.0) + 1.0);
        let price = match self.price_scale {
            PriceScale::Linear => m.price_min + frac * (m.price_max - m.price_min),
            PriceScale::Log => {
                let (lo, hi) = (m.price_min.ln(), m.price_max.ln());
                (lo + frac * (hi - lo)).exp()
            }
        };
        price.clamp(m.price_min, m.price_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn env(mode: RewardMode) -> GameEnv {
        let s = sample_scenario(&ScenarioRanges::default(), 0).unwrap();
        GameEnv::new(s, mode, 0).unwrap()
    }

    #[test]
    fn zero_width_ranges_give_identical_devices() {
        let ranges = ScenarioRanges {
            market: MarketParams {
                n_devices: 3,
                ..MarketParams::default()
            },
            capacity: (90.0, 90.0),
            alpha: (10.0, 10.0),
        };
        let s = sample_scenario(&ranges, 5).unwrap();
        assert_eq!(s.devices.len(), 3);
        assert!(s
            .devices
            .iter()
            .all(|d| d.capacity == 90.0 && d.alpha == 10.0));
    }

    #[test]
    fn scenarios_are_seeded() {
        let r = ScenarioRanges::default();
        assert_eq!(
            sample_scenario(&r, 3).unwrap(),
            sample_scenario(&r, 3).unwrap()
        );
        let a = sample_scenario(&r, 0).unwrap();
        let b = sample_scenario(&r, 1).unwrap();
        assert_ne!(a.devices, b.devices);
        for d in &a.devices {
            assert!((90.0..=120.0).contains(&d.capacity));
            assert!((5.0..=15.0).contains(&d.alpha));
        }
    }

    #[test]
    fn inverted_ranges_fail() {
        let r = ScenarioRanges {
            alpha: (3.0, 1.0),
            ..ScenarioRanges::default()
        };
        assert!(sample_scenario(&r, 0).is_err());
    }

    #[test]
    fn reset_is_consistent_and_reproducible() {
        let mut a = env(RewardMode::BinaryImprovement);
        let mut b = env(RewardMode::BinaryImprovement);
        let sa = a.reset();
        assert_eq!(sa, b.reset());
        let expected = a.scenario().respond(sa.price_prev).layers;
        assert_eq!(sa.layer_prev, expected);
    }

    #[test]
    fn pinned_bounds_reset_to_the_pin() {
        let ranges = ScenarioRanges {
            market: MarketParams {
                price_min: 1.0,
                price_max: 1.0,
                ..MarketParams::default()
            },
            ..ScenarioRanges::default()
        };
        let s = sample_scenario(&ranges, 0).unwrap();
        let mut e = GameEnv::new(s, RewardMode::BinaryImprovement, 9).unwrap();
        let st = e.reset();
        assert_eq!(st.price_prev.value(), 1.0);
        assert_eq!(st.layer_prev, e.scenario().respond(st.price_prev).layers);
    }

    fn two_device_env(mode: RewardMode) -> GameEnv {
        let market = MarketParams {
            n_devices: 2,
            ..MarketParams::default()
        };
        let devs = vec![DeviceProfile::new(100.0, 10.0, &market).unwrap(); 2];
        GameEnv::new(Scenario::new(market, devs, 0).unwrap(), mode, 0).unwrap()
    }

    #[test]
    fn binary_reward_follows_improvement() {
        let e = two_device_env(RewardMode::BinaryImprovement);
        // at P = 1 both devices run 38 layers, U_s = 921.6
        let up = GameState {
            price_prev: e.market().clamp_price(5.0),
            layer_prev: vec![40, 40],
        };
        let t = e.step(&up, 1.0).unwrap();
        assert_eq!(t.next.layer_prev, vec![38, 38]);
        assert_abs_diff_eq!(t.info.server_utility, 921.6, epsilon = 1e-9);
        // 1000 − 400 = 600 before, so utility rose
        assert_eq!(t.reward, 1.0);

        // a state already sitting at 921.6 sees no strict improvement
        let same = t.next.clone();
        assert_eq!(e.step(&same, 1.0).unwrap().reward, 0.0);
        // moving to a worse price gives 0
        assert_eq!(e.step(&same, 5.0).unwrap().reward, 0.0);
    }

    #[test]
    fn raw_reward_scales_utility() {
        let e = two_device_env(RewardMode::RawUtility { scale: 1000.0 });
        let s = GameState {
            price_prev: e.market().clamp_price(1.0),
            layer_prev: vec![0, 0],
        };
        let t = e.step(&s, 1.0).unwrap();
        assert_abs_diff_eq!(t.reward, 0.9216, epsilon = 1e-12);
    }

    #[test]
    fn out_of_bounds_actions_fail() {
        let mut e = env(RewardMode::raw_for(&MarketParams::default()));
        let s = e.reset();
        assert!(matches!(
            e.step(&s, 5.5),
            Err(Error::PriceOutOfBounds { .. })
        ));
        assert!(e.step(&s, 0.0).is_err());
    }

    #[test]
    fn features_hit_boundaries() {
        let e = env(RewardMode::BinaryImprovement);
        let m = e.market().clone();
        let lo = GameState {
            price_prev: m.clamp_price(m.price_min),
            layer_prev: vec![0; 10],
        };
        let f = e.features(&lo);
        assert_eq!(f.len(), 11);
        assert_eq!(f[0], -1.0);
        assert!(f[1..].iter().all(|&x| x == 0.0));

        let hi = GameState {
            price_prev: m.clamp_price(m.price_max),
            layer_prev: vec![40; 10],
        };
        assert!(e.features(&hi).iter().all(|&x| x == 1.0));

        let mid = GameState {
            price_prev: m.clamp_price(0.5 * (m.price_min + m.price_max)),
            layer_prev: vec![20; 10],
        };
        let f = e.features(&mid);
        assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-12);
        assert_eq!(f[1], 0.5);
    }

    #[test]
    fn unit_mapping_covers_bounds() {
        for scale in [PriceScale::Linear, PriceScale::Log] {
            let e = env(RewardMode::BinaryImprovement)
                .with_price_scale(scale)
                .unwrap();
            assert_abs_diff_eq!(e.unit_to_price(-1.0), 0.01, epsilon = 1e-15);
            assert_abs_diff_eq!(e.unit_to_price(1.0), 5.0, epsilon = 1e-12);
            assert_abs_diff_eq!(e.unit_to_price(7.0), 5.0, epsilon = 1e-12);
        }
        let lin = env(RewardMode::BinaryImprovement)
            .with_price_scale(PriceScale::Linear)
            .unwrap();
        assert_abs_diff_eq!(lin.unit_to_price(0.0), 2.505, epsilon = 1e-12);
        let log = env(RewardMode::BinaryImprovement);
        assert_eq!(log.price_scale(), PriceScale::Log);
        assert_abs_diff_eq!(
            log.unit_to_price(0.0),
            (0.01f64 * 5.0).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_scale_needs_positive_floor() {
        let market = MarketParams {
            price_min: 0.0,
            n_devices: 1,
            ..MarketParams::default()
        };
        let devs = vec![DeviceProfile::new(100.0, 10.0, &market).unwrap()];
        let e = GameEnv::new(
            Scenario::new(market, devs, 0).unwrap(),
            RewardMode::BinaryImprovement,
            0,
        )
        .unwrap();
        assert_eq!(e.price_scale(), PriceScale::Linear);
        assert!(e.with_price_scale(PriceScale::Log).is_err());
    }
}
