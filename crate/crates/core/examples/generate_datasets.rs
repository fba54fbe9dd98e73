//! Builds the fixed training set of every environment and writes each as
//! CSV.
//!
//!     cargo run --release --example generate_datasets -- [out_dir]

use std::path::PathBuf;

use qregime::config::ExperimentConfig;
use qregime::{EnvKind, GradientMode};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    std::fs::create_dir_all(&out)?;
    for kind in EnvKind::ALL {
        let cfg = ExperimentConfig::classic(kind, GradientMode::Semi, &[64, 64], 0);
        let env = cfg.environment()?;
        let data = cfg.build_dataset(&env)?;
        let terminal = data.transitions.iter().filter(|t| t.next_is_terminal).count();
        let path = out.join(format!("{}.csv", kind.name()));
        data.save_csv(&path)?;
        println!(
            "{:<13} {:>6} transitions, {:>4} episodes, {:>4} terminal  -> {}",
            kind.name(),
            data.len(),
            data.episodes().len(),
            terminal,
            path.display()
        );
    }
    Ok(())
}
