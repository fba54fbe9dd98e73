//! Trains Grid World with the backward-semi gradient alone and writes the
//! per-state value trajectories and the loss curve as SVG.
//!
//!     cargo run --release --example backward_semi_dynamics -- [seed] [lr0] [out_dir]

use std::path::PathBuf;

use qregime::config::ExperimentConfig;
use qregime::plot::{loss_chart, value_dynamics_chart};
use qregime::trainer::{final_state_values, train_offline};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let mut cfg = ExperimentConfig::grid_world_backward_semi(&[64, 64], seed);
    if let Some(lr) = args.next() {
        cfg.optimizer.lr0 = lr.parse()?;
    }
    let out = args.next().map_or_else(std::env::temp_dir, PathBuf::from);

    let run = train_offline(&cfg)?;
    let losses: Vec<f64> = run.log.records.iter().map(|r| r.loss).collect();
    let (min_i, min) = losses.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &l)| if l < b.1 { (i, l) } else { b });
    println!("loss: start {:.4e}, minimum {:.4e} at step {}, final {:.4e}", losses[0], min, run.log.records[min_i].step, losses[losses.len() - 1]);

    let values = final_state_values(&run.log).expect("grid runs log state values");
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    println!("states by final value, highest first:");
    for s in order {
        println!("  state {s:>2}  {:.4}", values[s]);
    }

    let threshold = run.final_report().threshold;
    let dyn_path = out.join("backward_semi_values.svg");
    value_dynamics_chart("Backward-semi state values", &run.log.value_dynamics(), Some(threshold)).write(&dyn_path, None)?;
    let loss_path = out.join("backward_semi_loss.svg");
    loss_chart("Backward-semi loss", &[("backward-semi", &run.log)]).write(&loss_path, None)?;
    println!("wrote {} and {}", dyn_path.display(), loss_path.display());
    Ok(())
}
