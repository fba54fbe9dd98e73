//! Accumulated reward of TD- and RG-trained networks under Gaussian
//! parameter noise of growing scale; writes `reward_vs_alpha.svg`.
//!
//!     cargo run --release --example robustness_sweep -- [seed] [repeats] [out_dir]

use std::path::PathBuf;

use qregime::config::ExperimentConfig;
use qregime::evaluation::{default_alpha_grid, robustness_sweep};
use qregime::plot::reward_vs_alpha_chart;
use qregime::trainer::train_offline;
use qregime::GradientMode;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let repeats: usize = args.next().map_or(Ok(20), |s| s.parse())?;
    let out = args.next().map_or_else(std::env::temp_dir, PathBuf::from);

    let alphas = default_alpha_grid();
    let mut sweeps = Vec::new();
    for mode in [GradientMode::Semi, GradientMode::True] {
        let cfg = ExperimentConfig::grid_world(mode, &[64, 64], seed);
        let env = cfg.environment()?;
        let net = cfg.network(&env)?;
        let run = train_offline(&cfg)?;
        println!("{mode}: verdict {:?}", run.final_report().verdict);
        sweeps.push((mode.name(), robustness_sweep(&env, &net, &run.params, &alphas, repeats, 0)?));
    }

    println!("{:>10}  {:>16}  {:>16}", "alpha", "TD reward", "RG reward");
    for (i, alpha) in alphas.iter().enumerate() {
        let (td, rg) = (&sweeps[0].1.points[i], &sweeps[1].1.points[i]);
        println!(
            "{:>10.2e}  {:>8.3} ± {:<5.3}  {:>8.3} ± {:<5.3}",
            alpha, td.mean_reward, td.ci_half_width, rg.mean_reward, rg.ci_half_width
        );
    }
    let refs: Vec<_> = sweeps.iter().map(|(l, s)| (*l, s)).collect();
    let path = out.join("reward_vs_alpha.svg");
    reward_vs_alpha_chart("Grid World robustness", &refs).write(&path, None)?;
    println!("wrote {}", path.display());
    Ok(())
}
