use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Solver};
use super::output::{aligned_table, csv_bytes_with_header, write_atomic};
use crate::baselines::{random_search, PpoAgent};
use crate::env::{sample_scenario, GameEnv, Scenario};
use crate::error::{Error, Result};
use crate::game::{self, stackelberg_oracle, EquilibriumSolution, MarketParams};
use crate::gdm::GdmAgent;
use crate::log::{mean, TrainLog};

/// Inclusive epoch window of the mean-utility column.
pub const MEAN_WINDOW: (usize, usize) = (200, 500);

pub const RUN_HEADER: [&str; 4] = ["epoch", "price", "server_utility", "reward"];
pub const SUMMARY_HEADER: [&str; 5] = [
    "solver",
    "final_utility_mean",
    "mean_utility_200_500",
    "oracle_utility",
    "gap",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub solver: Solver,
    pub seed: u64,
    pub log: TrainLog,
    /// Wall-clock time; reported, never persisted.
    pub duration: Duration,
}

impl RunRecord {
    pub fn file_name(&self) -> String {
        format!("{}_seed{}.csv", self.solver, self.seed)
    }
}

#[derive(Serialize)]
struct RunRow {
    epoch: usize,
    price: f64,
    server_utility: f64,
    reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: Solver,
    /// Mean over seeds of the last epoch's utility.
    pub final_utility_mean: f64,
    /// Mean over seeds of the per-run mean over [`MEAN_WINDOW`]; empty when
    /// the runs are shorter than the window.
    pub mean_utility_200_500: Option<f64>,
    /// Mean over seeds of the exact equilibrium utility.
    pub oracle_utility: f64,
    /// `oracle_utility − final_utility_mean`.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    /// Mean over seeds of the best utility seen during a run, per row; shown
    /// in the text table only.
    pub best_so_far: Vec<f64>,
}

impl SummaryTable {
    pub fn row(&self, solver: Solver) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.solver == solver)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        csv_bytes_with_header(&SUMMARY_HEADER, &self.rows)
    }

    pub fn render(&self) -> String {
        let fmt = |v: f64| format!("{v:.3}");
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .zip(&self.best_so_far)
            .map(|(r, &best)| {
                vec![
                    r.solver.to_string(),
                    fmt(r.final_utility_mean),
                    r.mean_utility_200_500.map_or_else(|| "-".into(), fmt),
                    fmt(best),
                    fmt(r.oracle_utility),
                    fmt(r.gap),
                ]
            })
            .collect();
        aligned_table(
            &[
                "solver",
                "final_utility_mean",
                "mean_utility_200_500",
                "best_so_far",
                "oracle_utility",
                "gap",
            ],
            &rows,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
    /// One exact solution per seed, in `config.seeds` order.
    pub oracles: Vec<(u64, EquilibriumSolution)>,
    pub summary: SummaryTable,
}

pub fn scenario_for(config: &ExperimentConfig, seed: u64) -> Result<Scenario> {
    sample_scenario(&config.scenario.ranges(), seed)
}

pub fn env_for(config: &ExperimentConfig, seed: u64) -> Result<GameEnv> {
    let scenario = scenario_for(config, seed)?;
    let mode = config.reward_mode.mode(&scenario.market);
    GameEnv::new(scenario, mode, seed)?.with_price_scale(config.scenario.price_scale)
}

/// Train or search with one solver on the scenario of `seed`.
pub fn run_solver(config: &ExperimentConfig, solver: Solver, seed: u64) -> Result<RunRecord> {
    let mut env = env_for(config, seed)?;
    let start = Instant::now();
    let log = match solver {
        Solver::Gdm => {
            GdmAgent::new(env.feature_dim(), config.gdm_config(), seed)?.train(&mut env)?
        }
        Solver::Ppo => {
            PpoAgent::new(env.feature_dim(), config.ppo_config(), seed)?.train(&mut env)?
        }
        Solver::Random => random_search(&mut env, config.epochs, seed)?,
    };
    Ok(RunRecord {
        solver,
        seed,
        log,
        duration: start.elapsed(),
    })
}

/// Run every `(solver, seed)` pair, in parallel, and write
/// `runs/<solver>_seed<seed>.csv`, `summary.csv` and `summary.txt` under
/// `config.out_dir`.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    ensure_writable(&config.out_dir)?;
    let jobs: Vec<(Solver, u64)> = config
        .solvers
        .iter()
        .flat_map(|&s| config.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(solver, seed)| run_solver(config, solver, seed))
        .collect::<Result<Vec<_>>>()?;
    let oracles = config
        .seeds
        .iter()
        .map(|&seed| {
            let s = scenario_for(config, seed)?;
            Ok((
                seed,
                stackelberg_oracle(&s.devices, &s.market, config.oracle_epsilon)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(config, &runs, &oracles);
    let report = ExperimentReport {
        runs,
        oracles,
        summary,
    };
    write_report(&config.out_dir, &report)?;
    Ok(report)
}

pub fn summarize(
    config: &ExperimentConfig,
    runs: &[RunRecord],
    oracles: &[(u64, EquilibriumSolution)],
) -> SummaryTable {
    let oracle_utility = mean(
        &oracles
            .iter()
            .map(|(_, o)| o.server_utility)
            .collect::<Vec<_>>(),
    )
    .unwrap_or(f64::NAN);
    let mut rows = Vec::new();
    let mut best_so_far = Vec::new();
    for &solver in &config.solvers {
        let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.solver == solver).collect();
        let of = |f: &dyn Fn(&TrainLog) -> Option<f64>| {
            mean(&mine.iter().filter_map(|r| f(&r.log)).collect::<Vec<_>>())
        };
        let final_utility_mean = of(&|l| l.final_utility()).unwrap_or(f64::NAN);
        let mean_utility_200_500 = if config.epochs >= MEAN_WINDOW.1 {
            of(&|l| mean(&l.window(MEAN_WINDOW.0, MEAN_WINDOW.1)))
        } else {
            None
        };
        rows.push(SummaryRow {
            solver,
            final_utility_mean,
            mean_utility_200_500,
            oracle_utility,
            gap: oracle_utility - final_utility_mean,
        });
        best_so_far.push(of(&|l| l.best_utility()).unwrap_or(f64::NAN));
    }
    SummaryTable { rows, best_so_far }
}

pub fn run_csv(log: &TrainLog) -> Result<Vec<u8>> {
    let rows: Vec<RunRow> = log
        .records
        .iter()
        .map(|r| RunRow {
            epoch: r.epoch,
            price: r.price,
            server_utility: r.server_utility,
            reward: r.reward,
        })
        .collect();
    csv_bytes_with_header(&RUN_HEADER, &rows)
}

pub fn write_report(out_dir: &Path, report: &ExperimentReport) -> Result<()> {
    for r in &report.runs {
        write_atomic(&out_dir.join("runs").join(r.file_name()), &run_csv(&r.log)?)?;
    }
    write_atomic(&out_dir.join("summary.csv"), &report.summary.to_csv()?)?;
    write_atomic(
        &out_dir.join("summary.txt"),
        report.summary.render().as_bytes(),
    )
}

/// Fail early, before any training, when results could not be saved.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tempfile::NamedTempFile::new_in(dir)
        .map(drop)
        .map_err(|e| Error::io(dir, e))
}

/// Where a device sits in its threshold ladder at the posted price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceDiagnostics {
    pub capacity: f64,
    pub alpha: f64,
    pub layer_cap: u32,
    pub layers: u32,
    pub utility: f64,
    /// Threshold the price crossed to reach `layers`, if any.
    pub threshold_below: Option<f64>,
    /// Price the device needs to take one more layer, if it can.
    pub threshold_above: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub market: MarketParams,
    pub solution: EquilibriumSolution,
    pub devices: Vec<DeviceDiagnostics>,
    pub candidates: usize,
    /// Every candidate price gives the same server utility.
    pub flat_objective: bool,
}

impl OracleReport {
    pub fn new(scenario: &Scenario, epsilon: f64) -> Result<Self> {
        let m = &scenario.market;
        let solution = stackelberg_oracle(&scenario.devices, m, epsilon)?;
        let candidates = game::candidate_prices(&scenario.devices, m, epsilon);
        let utilities: Vec<f64> = candidates
            .iter()
            .map(|&p| scenario.respond(p).server_utility)
            .collect();
        let hi = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = utilities.iter().cloned().fold(f64::INFINITY, f64::min);
        let flat_objective = hi - lo <= 1e-12 * hi.abs().max(1.0);
        let devices = scenario
            .devices
            .iter()
            .zip(&solution.layers)
            .zip(&solution.device_utilities)
            .map(|((d, &layers), &utility)| {
                let cap = game::layer_cap(d, m);
                Ok(DeviceDiagnostics {
                    capacity: d.capacity,
                    alpha: d.alpha,
                    layer_cap: cap,
                    layers,
                    utility,
                    threshold_below: match layers {
                        0 => None,
                        l => Some(game::switch_threshold(d, l - 1, m)?),
                    },
                    threshold_above: if layers < cap {
                        Some(game::switch_threshold(d, layers, m)?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed: scenario.seed,
            market: m.clone(),
            solution,
            devices,
            candidates: candidates.len(),
            flat_objective,
        })
    }

    pub fn file_name(&self) -> String {
        format!("oracle_seed{}.json", self.seed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "seed {}: price {} server utility {} ({} candidates{})\n",
            self.seed,
            self.solution.price.value(),
            self.solution.server_utility,
            self.candidates,
            if self.flat_objective {
                ", flat objective"
            } else {
                ""
            }
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "-".into(), |t| format!("{t:.6}"));
        let rows: Vec<Vec<String>> = self
            .devices
            .iter()
            .enumerate()
            .map(|(i, d)| {
                vec![
                    i.to_string(),
                    format!("{:.3}", d.capacity),
                    format!("{:.3}", d.alpha),
                    d.layer_cap.to_string(),
                    d.layers.to_string(),
                    opt(d.threshold_below),
                    opt(d.threshold_above),
                    format!("{:.4}", d.utility),
                ]
            })
            .collect();
        out.push_str(&aligned_table(
            &[
                "device",
                "W",
                "alpha",
                "cap",
                "L*",
                "tau_below",
                "tau_above",
                "utility",
            ],
            &rows,
        ));
        out
    }
}

/// Solve and persist `oracle_seed<seed>.json` for every configured seed.
pub fn oracle(config: &ExperimentConfig) -> Result<Vec<OracleReport>> {
    config.validate()?;
    ensure_writable(&config.out_dir)?;
    let reports = config
        .seeds
        .iter()
        .map(|&seed| OracleReport::new(&scenario_for(config, seed)?, config.oracle_epsilon))
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        write_atomic(&config.out_dir.join(r.file_name()), r.to_json().as_bytes())?;
    }
    Ok(reports)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    Revenue,
    AlphaScale,
    CapacityScale,
    LMax,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [
        SweepParam::Beta,
        SweepParam::Revenue,
        SweepParam::AlphaScale,
        SweepParam::CapacityScale,
        SweepParam::LMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Revenue => "F",
            SweepParam::AlphaScale => "alpha-scale",
            SweepParam::CapacityScale => "W-scale",
            SweepParam::LMax => "l_max",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!("{self} = {value}")));
        }
        let mut s = base.clone();
        match self {
            SweepParam::Beta => s.market.beta = value,
            SweepParam::Revenue => s.market.revenue_f = value,
            SweepParam::AlphaScale => s.devices.iter_mut().for_each(|d| d.alpha *= value),
            SweepParam::CapacityScale => s.devices.iter_mut().for_each(|d| d.capacity *= value),
            SweepParam::LMax => {
                if value < 1.0 || value.fract() != 0.0 || value > f64::from(u32::MAX) {
                    return Err(Error::InvalidParameter(format!(
                        "l_max must be a positive integer, got {value}"
                    )));
                }
                s.market.l_max = value as u32;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub price: f64,
    pub utility: f64,
}

/// One oracle solve per value on the scenario of the first configured seed;
/// writes `sweep_<param>.csv` and returns its path with the rows.
pub fn sweep(
    config: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<(PathBuf, Vec<SweepRow>)> {
    config.validate()?;
    ensure_writable(&config.out_dir)?;
    let base = scenario_for(config, config.seeds[0])?;
    let rows = values
        .iter()
        .map(|&value| {
            let s = param.apply(&base, value)?;
            let sol = stackelberg_oracle(&s.devices, &s.market, config.oracle_epsilon)?;
            Ok(SweepRow {
                value,
                price: sol.price.value(),
                utility: sol.server_utility,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = config.out_dir.join(format!("sweep_{param}.csv"));
    write_atomic(
        &path,
        &csv_bytes_with_header(&["value", "price", "utility"], &rows)?,
    )?;
    Ok((path, rows))
}
