//! Online variant: epsilon-greedy interaction with a replay buffer and one
//! mini-batch update per environment step, for TD and RG.
//!
//!     cargo run --release --example online_grid -- [seed] [steps]

use qregime::config::{DatasetSource, ExperimentConfig};
use qregime::optimizer::Schedule;
use qregime::trainer::train_online;
use qregime::GradientMode;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let steps: usize = args.next().map_or(Ok(30_000), |s| s.parse())?;
    for mode in [GradientMode::Semi, GradientMode::True] {
        let mut cfg = ExperimentConfig::grid_world(mode, &[64, 64], seed);
        cfg.dataset = DatasetSource::Online { buffer_capacity: 30_000, batch_size: 16, explore_rate: 0.2, seed };
        cfg.optimizer = Schedule { lr0: 5e-4, decay: 0.85, period: 3000 };
        cfg.training.steps = steps;
        cfg.training.log_every = steps / 10;
        let run = train_online(&cfg)?;
        println!("{mode}:");
        for r in &run.log.records {
            println!(
                "  step {:>6}  buffer loss {:.3e}  greedy reward {:>6.2}  verdict {:?}",
                r.step, r.loss, r.accumulated_reward, r.regime.verdict
            );
        }
    }
    Ok(())
}
