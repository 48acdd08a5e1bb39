//! Stackelberg pricing of split-encoder offloading between an edge server and
//! its devices, with an exact equilibrium oracle and three learned or sampled
//! solvers (diffusion policy, PPO, random search).

pub mod baselines;
pub mod env;
pub mod error;
pub mod game;
pub mod gdm;
pub mod gradcheck;
pub mod harness;
pub mod log;
pub mod nn;
pub mod partition;

pub use env::{GameEnv, GameState, PriceScale, RewardMode, Scenario, ScenarioRanges};
pub use error::{Error, Result};
pub use game::{DeviceProfile, EquilibriumSolution, MarketParams, Price};
