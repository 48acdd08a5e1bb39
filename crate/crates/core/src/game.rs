//! The two-stage pricing game between one edge server (leader) and its edge
//! devices (followers).
//!
//! The server posts a per-layer price. Each device then picks how many
//! encoder layers it runs locally, trading payment against the computation it
//! keeps for itself:
//!
//! ```text
//! device:  U_n = P·L_n + α_n·ln(1 + W_n − (A·L_n + B))
//! server:  U_s = F − Σ P·L_n − β·Σ A·(L_max − L_n)
//! ```
//!
//! Follower responses are step functions of the price with breakpoints at the
//! switch thresholds, so the leader objective is piecewise affine and the
//! exact equilibrium is found by evaluating the breakpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leader-side constants shared by every device in a market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub n_devices: usize,
    /// Number of stacked encoder layers.
    pub l_max: u32,
    /// Computation units per layer.
    pub coeff_a: f64,
    /// Fixed computation overhead, paid even at zero layers.
    pub coeff_b: f64,
    /// Server revenue.
    pub revenue_f: f64,
    /// Server cost per computation unit it still runs itself.
    pub beta: f64,
    pub price_min: f64,
    pub price_max: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            n_devices: 10,
            l_max: 40,
            coeff_a: 2.0,
            coeff_b: 4.0,
            revenue_f: 1000.0,
            beta: 0.3,
            price_min: 0.01,
            price_max: 5.0,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.coeff_a,
            self.coeff_b,
            self.revenue_f,
            self.beta,
            self.price_min,
            self.price_max,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "market parameters must be finite".into(),
            ));
        }
        if self.l_max < 1 {
            return Err(Error::InvalidParameter("l_max must be at least 1".into()));
        }
        if self.coeff_a <= 0.0 {
            return Err(Error::InvalidParameter("coeff_a must be positive".into()));
        }
        if self.coeff_b < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidParameter(
                "coeff_b and beta must be nonnegative".into(),
            ));
        }
        if self.revenue_f <= 0.0 {
            return Err(Error::InvalidParameter("revenue_f must be positive".into()));
        }
        // Degenerate bounds are accepted so a price can be pinned; the
        // interval only has to be ordered.
        if self.price_min < 0.0 || self.price_min > self.price_max {
            return Err(Error::InvalidParameter(format!(
                "price bounds [{}, {}] must satisfy 0 <= min <= max",
                self.price_min, self.price_max
            )));
        }
        Ok(())
    }

    /// Checked price constructor.
    pub fn price(&self, value: f64) -> Result<Price> {
        if !(self.price_min..=self.price_max).contains(&value) {
            return Err(Error::PriceOutOfBounds {
                price: value,
                min: self.price_min,
                max: self.price_max,
            });
        }
        Ok(Price(value))
    }

    pub fn clamp_price(&self, value: f64) -> Price {
        Price(value.clamp(self.price_min, self.price_max))
    }
}

/// A per-layer price posted by the server.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(f64);

impl Price {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// One follower: its compute capacity and how much it values retained capacity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub capacity: f64,
    pub alpha: f64,
}

impl DeviceProfile {
    pub fn new(capacity: f64, alpha: f64, market: &MarketParams) -> Result<Self> {
        let dev = Self { capacity, alpha };
        dev.validate(market)?;
        Ok(dev)
    }

    pub fn validate(&self, market: &MarketParams) -> Result<()> {
        if !self.capacity.is_finite() || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(
                "device parameters must be finite".into(),
            ));
        }
        if self.capacity <= market.coeff_b {
            return Err(Error::InvalidParameter(format!(
                "capacity {} does not cover the fixed overhead {}",
                self.capacity, market.coeff_b
            )));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidParameter("alpha must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Computation a device spends to run `layers` encoder layers.
pub fn device_compute(layers: u32, market: &MarketParams) -> f64 {
    market.coeff_a * f64::from(layers) + market.coeff_b
}

/// Largest layer count the device can afford, capped at `l_max`.
pub fn layer_cap(dev: &DeviceProfile, market: &MarketParams) -> u32 {
    let raw = ((dev.capacity - market.coeff_b) / market.coeff_a).floor();
    let mut cap = if raw <= 0.0 {
        0
    } else {
        raw.min(f64::from(market.l_max)) as u32
    };
    // floor() can land one layer high when the quotient rounds up.
    while cap > 0 && device_compute(cap, market) > dev.capacity {
        cap -= 1;
    }
    cap
}

fn utility_unchecked(dev: &DeviceProfile, layers: u32, price: f64, market: &MarketParams) -> f64 {
    let residual = dev.capacity - device_compute(layers, market);
    price * f64::from(layers) + dev.alpha * residual.ln_1p()
}

/// Follower utility: payment for the layers run plus satisfaction from the
/// capacity left over.
pub fn device_utility(
    dev: &DeviceProfile,
    layers: u32,
    price: Price,
    market: &MarketParams,
) -> Result<f64> {
    let compute = device_compute(layers, market);
    if compute > dev.capacity || layers > market.l_max {
        return Err(Error::InfeasibleAction {
            layers,
            compute,
            capacity: dev.capacity,
        });
    }
    Ok(utility_unchecked(dev, layers, price.value(), market))
}

/// Utility-maximizing layer count at `price`; ties go to the smaller count.
///
/// The utility is concave in L, so the integer optimum sits next to the
/// continuous stationary point `(W − B + 1 − α·A/P)/A`. A one-layer margin
/// around it absorbs rounding in the comparison.
pub fn best_response(dev: &DeviceProfile, price: Price, market: &MarketParams) -> u32 {
    let cap = layer_cap(dev, market);
    if cap == 0 {
        return 0;
    }
    let p = price.value();
    let stationary = if p <= 0.0 {
        0.0
    } else if dev.alpha == 0.0 {
        f64::from(cap)
    } else {
        (dev.capacity - market.coeff_b + 1.0 - dev.alpha * market.coeff_a / p) / market.coeff_a
    };
    let centre = stationary.clamp(0.0, f64::from(cap));
    let lo = (centre.floor() as u32).saturating_sub(1);
    let hi = (centre.ceil() as u32 + 1).min(cap);

    let mut best = lo;
    let mut best_u = utility_unchecked(dev, lo, p, market);
    for l in lo + 1..=hi {
        let u = utility_unchecked(dev, l, p, market);
        if u > best_u {
            best = l;
            best_u = u;
        }
    }
    best
}

/// Leader utility for a posted price and the followers' layer choices.
pub fn server_utility(price: Price, layers: &[u32], market: &MarketParams) -> f64 {
    let paid: f64 = layers.iter().map(|&l| price.value() * f64::from(l)).sum();
    let remaining: f64 = layers
        .iter()
        .map(|&l| market.coeff_a * f64::from(market.l_max.saturating_sub(l)))
        .sum();
    // one subtraction of F, so shifting F moves the result by a single rounding
    market.revenue_f - (paid + market.beta * remaining)
}

/// Price above which the device strictly prefers `layers + 1` over `layers`.
pub fn switch_threshold(dev: &DeviceProfile, layers: u32, market: &MarketParams) -> Result<f64> {
    let cap = layer_cap(dev, market);
    if layers >= cap {
        return Err(Error::InvalidParameter(format!(
            "threshold index {layers} must be below the layer cap {cap}"
        )));
    }
    Ok(threshold_unchecked(dev, layers, market))
}

fn threshold_unchecked(dev: &DeviceProfile, layers: u32, market: &MarketParams) -> f64 {
    let here = dev.capacity - device_compute(layers, market);
    let next = here - market.coeff_a;
    dev.alpha * (here.ln_1p() - next.ln_1p())
}

/// A posted price together with everything it induces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub price: Price,
    pub layers: Vec<u32>,
    pub server_utility: f64,
    pub device_utilities: Vec<f64>,
}

/// Let every follower best-respond to `price` and collect the utilities.
pub fn respond(
    devices: &[DeviceProfile],
    price: Price,
    market: &MarketParams,
) -> EquilibriumSolution {
    let layers: Vec<u32> = devices
        .iter()
        .map(|d| best_response(d, price, market))
        .collect();
    let device_utilities = devices
        .iter()
        .zip(&layers)
        .map(|(d, &l)| utility_unchecked(d, l, price.value(), market))
        .collect();
    EquilibriumSolution {
        server_utility: server_utility(price, &layers, market),
        price,
        layers,
        device_utilities,
    }
}

/// Every price the exact oracle evaluates, in evaluation order: the two
/// bounds, then for each device and layer the clamped threshold and the
/// clamped threshold plus `epsilon`.
pub fn candidate_prices(
    devices: &[DeviceProfile],
    market: &MarketParams,
    epsilon: f64,
) -> Vec<Price> {
    let mut out = vec![Price(market.price_min), Price(market.price_max)];
    for dev in devices {
        for l in 0..layer_cap(dev, market) {
            let tau = threshold_unchecked(dev, l, market);
            out.push(market.clamp_price(tau));
            out.push(market.clamp_price(tau + epsilon));
        }
    }
    out
}

/// Exact Stackelberg equilibrium of the pricing game.
///
/// Between consecutive thresholds the follower vector is constant and the
/// leader objective is affine and nonincreasing in price, so the supremum is
/// approached just above a threshold (or at `price_min`). The result is within
/// `epsilon·N·l_max` of the supremum. Ties keep the earliest candidate.
pub fn stackelberg_oracle(
    devices: &[DeviceProfile],
    market: &MarketParams,
    epsilon: f64,
) -> Result<EquilibriumSolution> {
    if devices.is_empty() {
        return Err(Error::NoDevices);
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    market.validate()?;
    for dev in devices {
        dev.validate(market)?;
    }

    let mut best: Option<EquilibriumSolution> = None;
    for price in candidate_prices(devices, market, epsilon) {
        let sol = respond(devices, price, market);
        if best
            .as_ref()
            .is_none_or(|b| sol.server_utility > b.server_utility)
        {
            best = Some(sol);
        }
    }
    Ok(best.expect("candidate set always holds the price bounds"))
}
