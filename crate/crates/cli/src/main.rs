use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gdmgame_core::gradcheck;
use gdmgame_core::harness::{self, parse_list, ExperimentConfig, RewardKind, Solver, SweepParam};

#[derive(Parser)]
#[command(
    name = "gdmgame",
    version,
    about = "Layer-pricing game: solvers, exact oracle and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every selected solver on every seed and write CSVs plus a summary.
    Run(Common),
    /// Solve the exact equilibrium of each seed's scenario.
    Oracle(Common),
    /// Re-solve the equilibrium while varying one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of beta, F, alpha-scale, W-scale, l_max.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Seed for network initialization and probe inputs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, e.g. 0,1,2.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// raw or binary.
    #[arg(long)]
    reward_mode: Option<String>,
    /// Comma-separated subset of gdm, ppo, random.
    #[arg(long)]
    solvers: Option<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_list::<u64>(s).with_context(|| format!("invalid --seeds {s:?}"))?;
        }
        if let Some(n) = self.epochs {
            cfg.epochs = n;
        }
        if let Some(m) = &self.reward_mode {
            cfg.reward_mode = m.parse::<RewardKind>()?;
        }
        if let Some(s) = &self.solvers {
            cfg.solvers = parse_list::<Solver>(s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.config()?;
            let report = harness::run(&cfg)?;
            for r in &report.runs {
                eprintln!(
                    "{:>6} seed {:<3} {:>8.2}s  final {:.3}",
                    r.solver.name(),
                    r.seed,
                    r.duration.as_secs_f64(),
                    r.log.final_utility().unwrap_or(f64::NAN)
                );
            }
            print!("{}", report.summary.render());
            println!("results in {}", cfg.out_dir.display());
        }
        Command::Oracle(common) => {
            let cfg = common.config()?;
            for r in harness::oracle(&cfg)? {
                print!("{}", r.render());
            }
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = common.config()?;
            let param: SweepParam = param.parse()?;
            let values = parse_list::<f64>(&values)
                .with_context(|| format!("invalid --values {values:?}"))?;
            if values.is_empty() {
                bail!("--values needs at least one number");
            }
            let (path, rows) = harness::sweep(&cfg, param, &values)?;
            println!("{:>12}  {:>12}  {:>12}", param.name(), "price", "utility");
            for r in rows {
                println!("{:>12}  {:>12.6}  {:>12.4}", r.value, r.price, r.utility);
            }
            println!("wrote {}", path.display());
        }
        Command::Gradcheck { common, seed } => {
            let cfg = common.config()?;
            let state_dim = cfg.scenario.n_devices + 1;
            let checks = gradcheck::check_all(state_dim, &cfg.gdm, &cfg.ppo, seed)?;
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{} {:<40} params {:>6}  max rel err {:.3e} (tol {:.0e})",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.n_params,
                    c.max_rel_error,
                    c.tolerance
                );
                failed += usize::from(!c.passed());
            }
            if failed > 0 {
                bail!("{failed} gradient check(s) failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gdmgame: {e:#}");
            ExitCode::FAILURE
        }
    }
}
