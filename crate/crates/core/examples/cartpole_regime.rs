//! Cart Pole on the fixed random-play dataset: TD and RG runs with the
//! partition means V_T, V_pT, V_O against the survival threshold.
//! The default is a short desk-scale run; pass a larger step count and
//! `512,1024,1024` for the full protocol.
//!
//!     cargo run --release --example cartpole_regime -- [seed] [steps] [hidden]

use qregime::config::ExperimentConfig;
use qregime::trainer::train_offline;
use qregime::{EnvKind, GradientMode};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let steps: usize = args.next().map_or(Ok(5_000), |s| s.parse())?;
    let hidden: Vec<usize> = args
        .next()
        .unwrap_or_else(|| "64,64".into())
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;

    for mode in [GradientMode::Semi, GradientMode::True] {
        let mut cfg = ExperimentConfig::classic(EnvKind::CartPole, mode, &hidden, seed);
        cfg.training.steps = steps;
        cfg.training.log_every = (steps / 5).max(1);
        let run = train_offline(&cfg)?;
        println!("{mode}: dataset {} transitions", run.dataset_size);
        for r in &run.log.records {
            let g = &r.regime;
            println!(
                "  step {:>6}  loss {:.3e}  V_T {:>8.3}  V_pT {:>8.3}  V_O {:>8.3}  sizes {:?}  reward {:>5}  {:?}",
                r.step,
                r.loss,
                g.v_t.unwrap_or(f64::NAN),
                g.v_pt.unwrap_or(f64::NAN),
                g.v_o.unwrap_or(f64::NAN),
                g.set_sizes,
                r.accumulated_reward,
                g.verdict
            );
        }
        println!("  threshold {:.4}", run.final_report().threshold);
    }
    Ok(())
}
