//! Command implementations behind the `qregime` binary. Each command reads a
//! TOML experiment config, writes its artifacts under an output directory
//! and finishes with a `manifest.json` listing them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{DatasetSource, ExperimentConfig};
use crate::dataset::{build_grid_cartesian, sample_random_play, Dataset};
use crate::env::{EnvKind, Environment};
use crate::error::{Error, Result};
use crate::evaluation::{default_alpha_grid, mean_ci, robustness_sweep, rollout_greedy, RolloutResult, SweepResult};
use crate::gradients::GradientMode;
use crate::oracle::{bad_regime_certificate, tabular_network};
use crate::plot;
use crate::qnet::{ParamVec, QNetwork};
use crate::regime::{analyze, regime_threshold, RegimeReport};
use crate::trainer::{self, RunLog, TrainOutcome};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "QREGIME_OUT";

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Record of one command invocation. Timestamps live only here so that
/// every other artifact is byte-identical across reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub artifacts: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, digest: Option<String>) -> Self {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_digest: digest,
            started_unix: unix_now(),
            finished_unix: 0,
            artifacts: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn add(&mut self, key: impl Into<String>, path: &Path) {
        self.artifacts.insert(key.into(), path.to_path_buf());
    }

    /// Checks that every listed artifact exists, then writes the manifest
    /// to `dir/manifest.json` and returns that path.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        if let Some((_, missing)) = self.artifacts.iter().find(|(_, p)| !p.exists()) {
            return Err(Error::MissingArtifact(missing.clone()));
        }
        self.finished_unix = unix_now();
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Loads a config; a relative `file` dataset path is resolved against the
/// config's directory when it does not exist relative to the working one.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let DatasetSource::File { path: data } = &mut cfg.dataset {
        if data.is_relative() && !data.exists() {
            if let Some(parent) = path.parent() {
                *data = parent.join(&*data);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output root: explicit flag, then `$QREGIME_OUT`, then the config's
/// `output.dir`, then `runs`.
pub fn output_root(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.and_then(|c| c.output.dir.clone()).unwrap_or_else(|| PathBuf::from("runs"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// `gen-data`: writes `dataset.csv` for an offline config.
pub fn cmd_gen_data(config_path: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let cfg = load_config(config_path)?;
    let env = cfg.environment()?;
    let data = cfg.build_dataset(&env)?;
    let dir = output_root(out, Some(&cfg)).join(&cfg.name);
    ensure_dir(&dir)?;
    let digest = cfg.digest();
    let mut manifest = RunManifest::new("gen-data", Some(digest.clone()));
    let path = dir.join("dataset.csv");
    data.save_csv_tagged(&path, Some(&digest))?;
    manifest.add("dataset", &path);
    manifest.finish(&dir)?;
    Ok(path)
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub config: PathBuf,
    pub seeds: Option<Vec<u64>>,
    pub mode: Option<GradientMode>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
    /// Continue from this checkpoint with a fresh optimizer.
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub final_loss: f64,
    pub report: RegimeReport,
}

/// Applies command-line overrides to a loaded config.
pub fn effective_config(opts: &TrainOptions) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&opts.config)?;
    if let Some(m) = opts.mode {
        cfg.training.mode = m;
    }
    if let Some(s) = opts.steps {
        cfg.training.steps = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `train`: one run per seed, in parallel, each under `<root>/<name>/seed-<k>`.
pub fn cmd_train(opts: &TrainOptions) -> Result<Vec<SeedSummary>> {
    let base = effective_config(opts)?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| vec![base.network.init_seed]);
    if seeds.is_empty() {
        return Err(Error::config("--seeds needs at least one seed"));
    }
    let root = output_root(opts.out.as_deref(), Some(&base)).join(&base.name);
    let resume = match &opts.resume {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    let results: Vec<Result<SeedSummary>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = base.clone();
            cfg.network.init_seed = seed;
            train_one(&cfg, &root.join(format!("seed-{seed}")), resume.as_ref())
        })
        .collect();
    results.into_iter().collect()
}

fn train_one(cfg: &ExperimentConfig, dir: &Path, resume: Option<&Checkpoint>) -> Result<SeedSummary> {
    ensure_dir(dir)?;
    let digest = cfg.digest();
    let mut manifest = RunManifest::new("train", Some(digest.clone()));
    let config_path = dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml())?;
    manifest.add("config", &config_path);

    let env = cfg.environment()?;
    let net = cfg.network(&env)?;
    let mut periodic = Vec::new();
    let outcome: TrainOutcome = match resume {
        Some(ck) => {
            manifest.notes.push(format!("continued from a {} checkpoint at step {}", ck.mode, ck.step));
            trainer::continue_training(ck, cfg, cfg.training.mode, cfg.training.steps)?
        }
        None if cfg.is_online() => {
            manifest
                .notes
                .push("accumulated reward comes from separate greedy evaluation rollouts, not training episodes".into());
            trainer::train_online(cfg)?
        }
        None => {
            let mut hook = |step: usize, params: &ParamVec, adam: &crate::optimizer::AdamState| -> Result<()> {
                let ck = Checkpoint {
                    shape: net.shape().clone(),
                    init_seed: cfg.network.init_seed,
                    step,
                    mode: cfg.training.mode,
                    config_digest: digest.clone(),
                    params: params.clone(),
                    adam: Some(adam.clone()),
                };
                let path = dir.join(format!("step-{step}.ckpt"));
                ck.save(&path)?;
                periodic.push((step, path));
                Ok(())
            };
            trainer::train_offline_with(cfg, Some(&mut hook))?
        }
    };
    for (step, path) in &periodic {
        manifest.add(format!("checkpoint-{step}"), path);
    }

    let log_path = dir.join("runlog.jsonl");
    outcome.log.write_jsonl(&log_path)?;
    manifest.add("runlog", &log_path);

    let ck_path = dir.join("final.ckpt");
    let mut ck = outcome.checkpoint(cfg, &net, cfg.training.mode);
    if let Some(prev) = resume {
        ck.step = prev.step + outcome.steps;
    }
    ck.save(&ck_path)?;
    manifest.add("checkpoint", &ck_path);

    let report = outcome.final_report().clone();
    let report_path = dir.join("regime.json");
    write_json(&report_path, &TaggedReport { config_digest: &digest, report: &report })?;
    manifest.add("regime", &report_path);
    manifest.finish(dir)?;
    Ok(SeedSummary { seed: cfg.network.init_seed, dir: dir.to_path_buf(), final_loss: outcome.log.final_loss(), report })
}

#[derive(Serialize)]
struct TaggedReport<'a> {
    config_digest: &'a str,
    #[serde(flatten)]
    report: &'a RegimeReport,
}

/// Loads a checkpoint and checks it against the config's network.
pub fn load_checkpoint_for(cfg: &ExperimentConfig, path: &Path) -> Result<(Environment, QNetwork, Checkpoint)> {
    let env = cfg.environment()?;
    let net = cfg.network(&env)?;
    let ck = Checkpoint::load(path)?;
    if ck.shape != *net.shape() {
        return Err(Error::config(format!(
            "checkpoint has layer widths {:?}, config expects {:?}",
            ck.shape.widths(),
            net.shape().widths()
        )));
    }
    Ok((env, net, ck))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub rollouts: Vec<RolloutResult>,
    pub mean_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_half_width: Option<f64>,
}

/// `eval`: greedy rollouts from `episodes` consecutive start seeds beginning
/// at the config's evaluation seed.
pub fn cmd_eval(config_path: &Path, checkpoint: &Path, episodes: usize, out: Option<&Path>) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::config("--episodes must be at least 1"));
    }
    let cfg = load_config(config_path)?;
    let (env, net, ck) = load_checkpoint_for(&cfg, checkpoint)?;
    let seeds: Vec<u64> = (0..episodes as u64).map(|i| cfg.training.eval_seed + i).collect();
    let rollouts = seeds
        .iter()
        .map(|&s| rollout_greedy(&env, &net, &ck.params, s))
        .collect::<Result<Vec<_>>>()?;
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.accumulated_reward).collect();
    let (mean_reward, ci_half_width) = mean_ci(&rewards);
    let report = EvalReport { config_digest: cfg.digest(), seeds, rollouts, mean_reward, ci_half_width };
    let dir = output_root(out, Some(&cfg));
    ensure_dir(&dir)?;
    let path = dir.join("eval.json");
    write_json(&path, &report)?;
    let mut manifest = RunManifest::new("eval", Some(cfg.digest()));
    manifest.add("checkpoint", checkpoint);
    manifest.add("eval", &path);
    manifest.finish(&dir)?;
    Ok(report)
}

/// Parses a comma-separated alpha list.
pub fn parse_alphas(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::config(format!("bad alpha `{t}`"))))
        .collect()
}

/// `sweep`: robustness sweep of a checkpoint, written to `sweep.csv`.
pub fn cmd_sweep(
    config_path: &Path,
    checkpoint: &Path,
    alphas: Option<Vec<f64>>,
    repeats: usize,
    out: Option<&Path>,
) -> Result<SweepResult> {
    let cfg = load_config(config_path)?;
    let (env, net, ck) = load_checkpoint_for(&cfg, checkpoint)?;
    let alphas = alphas.unwrap_or_else(default_alpha_grid);
    let sweep = robustness_sweep(&env, &net, &ck.params, &alphas, repeats, cfg.training.eval_seed)
        .map_err(|e| match e {
            Error::Contract(m) => Error::Config(m),
            other => other,
        })?;
    let dir = output_root(out, Some(&cfg));
    ensure_dir(&dir)?;
    let path = dir.join("sweep.csv");
    sweep.write_csv(&path, Some(&cfg.digest()))?;
    let mut manifest = RunManifest::new("sweep", Some(cfg.digest()));
    manifest.add("checkpoint", checkpoint);
    manifest.add("sweep", &path);
    manifest.finish(&dir)?;
    Ok(sweep)
}

/// What `regime` audits.
#[derive(Clone, Debug)]
pub enum RegimeSource {
    Checkpoint(PathBuf),
    /// The analytic bad-regime table of a Grid World config.
    Certificate,
}

/// Transitions used for a regime audit: the config's own dataset, or for
/// online configs the offline protocol dataset of the same environment.
pub fn audit_dataset(cfg: &ExperimentConfig, env: &Environment) -> Result<Dataset> {
    match cfg.dataset {
        DatasetSource::Online { .. } => match env.kind() {
            EnvKind::GridWorld => build_grid_cartesian(env),
            kind => {
                let DatasetSource::RandomPlay { seed, episodes } =
                    ExperimentConfig::classic(kind, GradientMode::Semi, &[], 0).dataset
                else {
                    unreachable!("classic configs use random play")
                };
                sample_random_play(env, seed, episodes)
            }
        },
        _ => cfg.build_dataset(env),
    }
}

/// `regime`: writes `regime.json` for a checkpoint or the certificate.
pub fn cmd_regime(
    config_path: &Path,
    source: &RegimeSource,
    margin: Option<f64>,
    out: Option<&Path>,
) -> Result<RegimeReport> {
    let cfg = load_config(config_path)?;
    let env = cfg.environment()?;
    let data = audit_dataset(&cfg, &env)?;
    let margin = margin.or(cfg.training.regime_margin);
    let mut manifest = RunManifest::new("regime", Some(cfg.digest()));
    let report = match source {
        RegimeSource::Checkpoint(path) => {
            let (_, net, ck) = load_checkpoint_for(&cfg, path)?;
            manifest.add("checkpoint", path);
            analyze(&env, &data.transitions, &net, &ck.params, margin)?
        }
        RegimeSource::Certificate => {
            let grid = env.grid().ok_or_else(|| Error::config("--certificate needs a grid-world config"))?;
            let table = bad_regime_certificate(&grid.layout, env.spec())?;
            let (net, params) = tabular_network(&table)?;
            manifest.notes.push("audited the analytic bad-regime table".into());
            analyze(&env, &data.transitions, &net, &params, margin)?
        }
    };
    let dir = output_root(out, Some(&cfg));
    ensure_dir(&dir)?;
    let path = dir.join("regime.json");
    write_json(&path, &TaggedReport { config_digest: &cfg.digest(), report: &report })?;
    manifest.add("regime", &path);
    manifest.finish(&dir)?;
    Ok(report)
}

fn label_of(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match path.parent().and_then(Path::file_name) {
        Some(parent) => format!("{}/{}", parent.to_string_lossy(), stem),
        None => stem,
    }
}

/// `plot`: SVG figures from run logs (`.jsonl`) and sweep tables (`.csv`).
///
/// Run logs give a loss chart, a reward-vs-step chart (mean with 95% band
/// when the logs share their step axis) and, per log, a state-value chart
/// (Grid World) or a partition-mean chart (other environments).
pub fn cmd_plot(inputs: &[PathBuf], out: Option<&Path>) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(Error::config("plot needs at least one input file"));
    }
    let mut logs = Vec::new();
    let mut sweeps = Vec::new();
    for p in inputs {
        match p.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => logs.push((label_of(p), RunLog::read_jsonl(p)?)),
            Some("csv") => sweeps.push((label_of(p), SweepResult::read_csv(p)?)),
            _ => return Err(Error::config(format!("cannot plot {}: expected .jsonl or .csv", p.display()))),
        }
    }
    let dir = output_root(out, None);
    ensure_dir(&dir)?;
    let mut manifest = RunManifest::new("plot", None);
    let mut written = Vec::new();
    let mut emit = |name: String, chart: plot::Chart, manifest: &mut RunManifest| -> Result<()> {
        let path = dir.join(format!("{name}.svg"));
        chart.write(&path, None)?;
        manifest.add(name, &path);
        written.push(path);
        Ok(())
    };

    if !logs.is_empty() {
        let runs: Vec<(&str, &RunLog)> = logs.iter().map(|(l, r)| (l.as_str(), r)).collect();
        emit("loss".into(), plot::loss_chart("Training loss", &runs), &mut manifest)?;

        let steps: Vec<usize> = logs[0].1.records.iter().map(|r| r.step).collect();
        let rewards = |log: &RunLog| log.records.iter().map(|r| r.accumulated_reward).collect::<Vec<_>>();
        let same_axis = logs.iter().all(|(_, l)| l.records.iter().map(|r| r.step).eq(steps.iter().copied()));
        if same_axis {
            let curves: Vec<Vec<f64>> = logs.iter().map(|(_, l)| rewards(l)).collect();
            let agg = crate::evaluation::aggregate_trials(&curves)?;
            let chart = plot::reward_vs_step_chart("Accumulated reward", &steps, &[("mean", &agg)])?;
            emit("reward".into(), chart, &mut manifest)?;
        } else {
            let mut chart = plot::Chart::new("Accumulated reward", "training step", "accumulated reward");
            for (label, log) in &logs {
                let pts = log.records.iter().map(|r| (r.step as f64, r.accumulated_reward)).collect();
                chart.series.push(plot::Series::new(label.clone(), pts));
            }
            emit("reward".into(), chart, &mut manifest)?;
        }

        for (i, (label, log)) in logs.iter().enumerate() {
            let Some(first) = log.records.first() else { continue };
            let threshold = Some(first.regime.threshold);
            let dynamics = log.value_dynamics();
            if !dynamics.steps.is_empty() {
                let chart = plot::value_dynamics_chart(&format!("State values: {label}"), &dynamics, threshold);
                emit(format!("values-{i}"), chart, &mut manifest)?;
            } else {
                let mut chart =
                    plot::Chart::new(format!("Partition means: {label}"), "training step", "mean max_a Q");
                type Pick = fn(&RegimeReport) -> Option<f64>;
                let parts: [(&str, Pick); 3] = [("V_T", |r| r.v_t), ("V_pT", |r| r.v_pt), ("V_O", |r| r.v_o)];
                for (name, pick) in parts {
                    let pts: Vec<(f64, f64)> =
                        log.records.iter().filter_map(|r| Some((r.step as f64, pick(&r.regime)?))).collect();
                    if !pts.is_empty() {
                        chart.series.push(plot::Series::new(name, pts));
                    }
                }
                chart.reference = threshold.map(|t| (t, format!("threshold {t:.4}")));
                if !chart.series.is_empty() {
                    emit(format!("partitions-{i}"), chart, &mut manifest)?;
                }
            }
        }
    }
    if !sweeps.is_empty() {
        let refs: Vec<(&str, &SweepResult)> = sweeps.iter().map(|(l, s)| (l.as_str(), s)).collect();
        emit("reward_vs_alpha".into(), plot::reward_vs_alpha_chart("Robustness to parameter noise", &refs), &mut manifest)?;
    }
    manifest.finish(&dir)?;
    Ok(written)
}

/// Threshold of a config's environment, for display.
pub fn config_threshold(cfg: &ExperimentConfig) -> Result<f64> {
    let spec = cfg.environment()?.spec().clone();
    regime_threshold(spec.step_reward, spec.gamma)
}
