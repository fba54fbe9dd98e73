//! Trains TD and RG on the Grid World cartesian dataset for a handful of
//! seeds and prints loss, regime verdict and agreement with the optimal
//! policy for each run.
//!
//!     cargo run --release --example grid_td_vs_rg -- [seeds] [hidden] [modes]
//!
//! e.g. `-- 0,1,2 64,64 semi,true`.

use qregime::config::ExperimentConfig;
use qregime::oracle::value_iteration;
use qregime::trainer::{policy_agreement, train_offline};
use qregime::GradientMode;

fn parse_list<T: std::str::FromStr>(arg: Option<String>, default: &str) -> Vec<T> {
    arg.as_deref()
        .unwrap_or(default)
        .split(',')
        .filter_map(|s| s.trim().parse().ok())
        .collect()
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: Vec<u64> = parse_list(args.next(), "0,1,2");
    let hidden: Vec<usize> = parse_list(args.next(), "64,64");
    let modes: Vec<GradientMode> = parse_list(args.next(), "semi,true");

    let probe = ExperimentConfig::grid_world(GradientMode::Semi, &hidden, 0);
    let env = probe.environment()?;
    let grid = env.grid().expect("grid config");
    let optimal = value_iteration(&grid.layout, env.spec(), 1e-12)?;

    println!("{:>4}  {:>6}  {:>10}  {:>8}  {:>6}  {:>8}", "seed", "mode", "loss", "verdict", "agree", "reward");
    for &seed in &seeds {
        for &mode in &modes {
            let cfg = ExperimentConfig::grid_world(mode, &hidden, seed);
            let started = std::time::Instant::now();
            let out = train_offline(&cfg)?;
            let net = cfg.network(&env)?;
            let last = out.log.last().expect("final record");
            println!(
                "{:>4}  {:>6}  {:>10.3e}  {:>8}  {:>6.2}  {:>8.2}   ({:.1}s)",
                seed,
                mode.name(),
                last.loss,
                format!("{:?}", last.regime.verdict),
                policy_agreement(&env, &net, &out.params, &optimal.q)?,
                last.accumulated_reward,
                started.elapsed().as_secs_f64(),
            );
        }
    }
    Ok(())
}
