use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::PpoConfig;
use crate::env::{PriceScale, RewardMode, ScenarioRanges};
use crate::error::{Error, Result};
use crate::game::MarketParams;
use crate::gdm::GdmConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Gdm,
    Ppo,
    Random,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Gdm, Solver::Ppo, Solver::Random];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Gdm => "gdm",
            Solver::Ppo => "ppo",
            Solver::Random => "random",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownSolver(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Raw,
    Binary,
}

impl RewardKind {
    pub fn mode(self, market: &MarketParams) -> RewardMode {
        match self {
            RewardKind::Raw => RewardMode::raw_for(market),
            RewardKind::Binary => RewardMode::BinaryImprovement,
        }
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(RewardKind::Raw),
            "binary" => Ok(RewardKind::Binary),
            _ => Err(Error::Config(format!(
                "reward mode must be raw or binary, got {s:?}"
            ))),
        }
    }
}

/// The `[scenario]` table: market constants plus the ranges devices are drawn
/// from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_devices: usize,
    pub l_max: u32,
    pub coeff_a: f64,
    pub coeff_b: f64,
    pub revenue_f: f64,
    pub beta: f64,
    pub price_min: f64,
    pub price_max: f64,
    pub capacity_min: f64,
    pub capacity_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// How normalized actions map onto prices; `log` needs `price_min > 0`.
    pub price_scale: PriceScale,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let r = ScenarioRanges::default();
        let m = r.market;
        Self {
            n_devices: m.n_devices,
            l_max: m.l_max,
            coeff_a: m.coeff_a,
            coeff_b: m.coeff_b,
            revenue_f: m.revenue_f,
            beta: m.beta,
            price_min: m.price_min,
            price_max: m.price_max,
            capacity_min: r.capacity.0,
            capacity_max: r.capacity.1,
            alpha_min: r.alpha.0,
            alpha_max: r.alpha.1,
            price_scale: PriceScale::Log,
        }
    }
}

impl ScenarioConfig {
    pub fn ranges(&self) -> ScenarioRanges {
        ScenarioRanges {
            market: MarketParams {
                n_devices: self.n_devices,
                l_max: self.l_max,
                coeff_a: self.coeff_a,
                coeff_b: self.coeff_b,
                revenue_f: self.revenue_f,
                beta: self.beta,
                price_min: self.price_min,
                price_max: self.price_max,
            },
            capacity: (self.capacity_min, self.capacity_max),
            alpha: (self.alpha_min, self.alpha_max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub solvers: Vec<Solver>,
    /// Epochs for every solver; overrides `gdm.epochs` and `ppo.epochs`.
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub reward_mode: RewardKind,
    pub out_dir: PathBuf,
    pub oracle_epsilon: f64,
    pub scenario: ScenarioConfig,
    pub gdm: GdmConfig,
    pub ppo: PpoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            solvers: Solver::ALL.to_vec(),
            epochs: 500,
            seeds: vec![0, 1, 2],
            reward_mode: RewardKind::Raw,
            out_dir: PathBuf::from("results"),
            oracle_epsilon: 1e-6,
            scenario: ScenarioConfig::default(),
            gdm: GdmConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.solvers.is_empty() {
            return Err(Error::Config("at least one solver is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.oracle_epsilon.is_nan() || self.oracle_epsilon <= 0.0 {
            return Err(Error::Config("oracle_epsilon must be positive".into()));
        }
        self.scenario.ranges().validate()?;
        if self.scenario.price_scale == PriceScale::Log && self.scenario.price_min <= 0.0 {
            return Err(Error::Config(
                "price_scale = \"log\" needs price_min > 0".into(),
            ));
        }
        self.gdm_config().validate()?;
        self.ppo_config().validate()
    }

    pub fn gdm_config(&self) -> GdmConfig {
        GdmConfig {
            epochs: self.epochs,
            ..self.gdm.clone()
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            epochs: self.epochs,
            ..self.ppo.clone()
        }
    }
}

/// Parse a comma-separated list such as `0,1,2` or `gdm,random`.
pub fn parse_list<T: FromStr>(text: &str) -> std::result::Result<Vec<T>, T::Err> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "schema_version = 1\nsolvers = [\"random\"]\nepochs = 10\n[scenario]\nbeta = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.solvers, vec![Solver::Random]);
        assert_eq!(cfg.scenario.beta, 0.5);
        assert_eq!(cfg.scenario.l_max, 40);
        assert_eq!(cfg.gdm_config().epochs, 10);
    }

    #[test]
    fn bad_documents_are_rejected() {
        for text in [
            "schema_version = 2",
            "solvers = []",
            "solvers = [\"sac\"]",
            "seeds = []",
            "epochs = 0",
            "typo_key = 1",
            "[scenario]\nprice_min = 0.0",
            "[scenario]\ncapacity_min = 1.0\ncapacity_max = 2.0",
            "[gdm]\nbatch_size = 0",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn lists_parse() {
        assert_eq!(parse_list::<u64>("0, 1,2").unwrap(), vec![0, 1, 2]);
        assert_eq!(
            parse_list::<Solver>("gdm,random").unwrap(),
            vec![Solver::Gdm, Solver::Random]
        );
        assert!(matches!(
            parse_list::<Solver>("gdm,dqn"),
            Err(Error::UnknownSolver(s)) if s == "dqn"
        ));
    }
}
