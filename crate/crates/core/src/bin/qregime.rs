use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qregime::cli::{self, RegimeSource, TrainOptions};
use qregime::{Error, GradientMode};

#[derive(Parser)]
#[command(name = "qregime", version, about = "Train and audit Q-networks with semi, true or backward-semi gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the training dataset described by a config and write it as CSV.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one network per seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated init seeds; runs go to per-seed directories.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        mode: Option<GradientMode>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint with a fresh optimizer.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Greedy rollouts of a checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accumulated reward under Gaussian parameter noise of growing scale.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated, strictly increasing; defaults to 0 plus a log grid.
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Good/bad regime verdict of a checkpoint or of the analytic bad table.
    Regime {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "certificate", required_unless_present = "certificate")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        certificate: bool,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG charts from run logs (.jsonl) and sweep tables (.csv).
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> qregime::Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let path = cli::cmd_gen_data(&config, out.as_deref())?;
            println!("{}", path.display());
        }
        Command::Train { config, seeds, mode, steps, out, resume } => {
            let runs = cli::cmd_train(&TrainOptions { config, seeds, mode, steps, out, resume })?;
            for r in runs {
                println!(
                    "seed {:>4}  loss {:.3e}  verdict {:?}  -> {}",
                    r.seed,
                    r.final_loss,
                    r.report.verdict,
                    r.dir.display()
                );
            }
        }
        Command::Eval { config, checkpoint, episodes, out } => {
            let report = cli::cmd_eval(&config, &checkpoint, episodes, out.as_deref())?;
            match report.ci_half_width {
                Some(h) => println!("mean accumulated reward {:.4} ± {:.4}", report.mean_reward, h),
                None => println!("accumulated reward {:.4}", report.mean_reward),
            }
        }
        Command::Sweep { config, checkpoint, alphas, repeats, out } => {
            let alphas = alphas.as_deref().map(cli::parse_alphas).transpose()?;
            let sweep = cli::cmd_sweep(&config, &checkpoint, alphas, repeats, out.as_deref())?;
            for p in sweep.points {
                println!("alpha {:<10.3e} reward {:.4} ± {:.4}", p.alpha, p.mean_reward, p.ci_half_width);
            }
        }
        Command::Regime { config, checkpoint, certificate: _, margin, out } => {
            let source = match checkpoint {
                Some(p) => RegimeSource::Checkpoint(p),
                None => RegimeSource::Certificate,
            };
            let report = cli::cmd_regime(&config, &source, margin, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Plot { inputs, out } => {
            for p in cli::cmd_plot(&inputs, out.as_deref())? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Divergence { step, .. } = e {
                eprintln!("training diverged at step {step}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
