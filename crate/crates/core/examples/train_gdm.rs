//! Train the diffusion policy on the default scenario and compare it with the
//! exact equilibrium.
//!
//! ```text
//! cargo run --release -p gdmgame-core --example train_gdm -- 0 1 2
//! ```

use gdmgame_core::game::stackelberg_oracle;
use gdmgame_core::gdm::GdmAgent;
use gdmgame_core::harness::{env_for, ExperimentConfig};
use gdmgame_core::log::{mean, std_dev};

fn main() -> gdmgame_core::Result<()> {
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("seeds are integers"))
        .collect();
    let seeds = if seeds.is_empty() {
        vec![0, 1, 2]
    } else {
        seeds
    };
    let cfg = ExperimentConfig::default();
    for seed in seeds {
        let mut env = env_for(&cfg, seed)?;
        let s = env.scenario();
        let oracle = stackelberg_oracle(&s.devices, &s.market, cfg.oracle_epsilon)?;
        let mut agent = GdmAgent::new(env.feature_dim(), cfg.gdm_config(), seed)?;
        let log = agent.train(&mut env)?;
        let last = log.records.last().expect("500 epochs");
        println!(
            "seed {seed}: oracle {:.3} @ {:.4} | final {:.3} @ {:.4} | mean 200-500 {:.3} | sd 400-500 {:.2}",
            oracle.server_utility,
            oracle.price.value(),
            last.server_utility,
            last.price,
            mean(&log.window(200, 500)).unwrap_or(f64::NAN),
            std_dev(&log.window(400, 500)).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
