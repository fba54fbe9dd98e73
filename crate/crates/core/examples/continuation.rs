//! Train with the true gradient, checkpoint, then continue the same network
//! with the semi-gradient under a fresh optimizer. Prints the loss around the
//! switch and the verdict before and after.
//!
//!     cargo run --release --example continuation -- [seed] [hidden]

use qregime::config::ExperimentConfig;
use qregime::trainer::{continue_training, train_offline};
use qregime::{Checkpoint, GradientMode};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let hidden: Vec<usize> = args
        .next()
        .unwrap_or_else(|| "64,64".into())
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;

    let rg_cfg = ExperimentConfig::grid_world(GradientMode::True, &hidden, seed);
    let rg = train_offline(&rg_cfg)?;
    let env = rg_cfg.environment()?;
    let net = rg_cfg.network(&env)?;
    let path = std::env::temp_dir().join(format!("qregime-continuation-{seed}.ckpt"));
    rg.checkpoint(&rg_cfg, &net, GradientMode::True).save(&path)?;
    println!(
        "RG: loss {:.3e}, verdict {:?}, checkpoint {}",
        rg.log.final_loss(),
        rg.final_report().verdict,
        path.display()
    );

    let ck = Checkpoint::load(&path)?;
    let mut td_cfg = ExperimentConfig::grid_world(GradientMode::Semi, &hidden, seed);
    td_cfg.training.log_every = 10;
    let td = continue_training(&ck, &td_cfg, GradientMode::Semi, 30_000)?;
    println!("TD continuation, first logged steps:");
    for r in td.log.records.iter().take(12) {
        println!("  step {:>5}  loss {:.3e}  V(start) {:.4}", r.step, r.loss, r.state_values.as_ref().unwrap()[12]);
    }
    let peak = td.log.records.iter().filter(|r| r.step <= 3000).map(|r| r.loss).fold(0.0, f64::max);
    println!("early peak loss {peak:.3e} ({:.1}x checkpoint loss)", peak / rg.log.final_loss());
    println!("TD: loss {:.3e}, verdict {:?}", td.log.final_loss(), td.final_report().verdict);
    Ok(())
}
