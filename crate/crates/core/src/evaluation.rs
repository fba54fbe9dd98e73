//! Greedy rollouts, perturbation sweeps and trial aggregation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, StateVec};
use crate::error::{Error, Result};
use crate::qnet::{argmax, perturb, ParamVec, QNetwork};

/// z-value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// Undiscounted sum of rewards.
    pub accumulated_reward: f64,
    pub steps_taken: usize,
    pub reached_terminal: bool,
}

/// Follows the greedy policy from `env.reset(start_seed)` until a terminal
/// state or the episode cap.
pub fn rollout_greedy(env: &Environment, net: &QNetwork, params: &ParamVec, start_seed: u64) -> Result<RolloutResult> {
    rollout_from(env, net, params, env.reset(start_seed))
}

pub fn rollout_from(env: &Environment, net: &QNetwork, params: &ParamVec, start: StateVec) -> Result<RolloutResult> {
    let mut state = start;
    let mut total = 0.0;
    for step in 0..env.spec().max_episode_steps {
        let action = argmax(&net.forward(params, &state)?);
        let out = env.step(&state, action)?;
        total += out.reward;
        if out.terminal {
            return Ok(RolloutResult { accumulated_reward: total, steps_taken: step + 1, reached_terminal: true });
        }
        state = out.next;
    }
    Ok(RolloutResult {
        accumulated_reward: total,
        steps_taken: env.spec().max_episode_steps,
        reached_terminal: false,
    })
}

/// Mean and 95% half-width; `None` half-width when `n < 2`.
pub fn mean_ci(samples: &[f64]) -> (f64, Option<f64>) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(Z_95 * var.sqrt() / n.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub mean_reward: f64,
    pub ci_half_width: f64,
    pub n: usize,
    /// Set when `n < 2` and the half-width is reported as 0.
    pub insufficient_n: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn write_csv(&self, path: &Path, digest: Option<&str>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        if let Some(d) = digest {
            writeln!(file, "# config-digest={d}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["alpha", "mean_reward", "ci_half_width", "n", "insufficient_n"])?;
        for p in &self.points {
            w.write_record([
                p.alpha.to_string(),
                p.mean_reward.to_string(),
                p.ci_half_width.to_string(),
                p.n.to_string(),
                p.insufficient_n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let points = r.deserialize().collect::<std::result::Result<Vec<SweepPoint>, _>>()?;
        Ok(SweepResult { points })
    }
}

/// 0 followed by 11 log-spaced scales from 1e-4 to 1e-1.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..11).map(|i| 10f64.powf(-4.0 + 3.0 * i as f64 / 10.0)));
    grid
}

/// Seed of one perturbation, derived from the sweep seed and its position.
pub fn perturbation_seed(seed: u64, alpha_index: usize, repeat: usize) -> u64 {
    let mut z = seed ^ ((alpha_index as u64) << 32) ^ (repeat as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// For each scale, `repeats` perturbed copies of `params`, one greedy rollout
/// each from `env.reset(seed)`.
pub fn robustness_sweep(
    env: &Environment,
    net: &QNetwork,
    params: &ParamVec,
    alphas: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<SweepResult> {
    if alphas.is_empty() || repeats == 0 {
        return Err(Error::contract("sweep needs at least one alpha and one repeat"));
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract("alphas must be strictly increasing"));
    }
    let start = env.reset(seed);
    let unperturbed = rollout_from(env, net, params, start.clone())?.accumulated_reward;
    let points = alphas
        .iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            if alpha == 0.0 {
                // Every repeat is the unperturbed rollout; report it as is
                // rather than through a floating-point mean.
                return Ok(SweepPoint {
                    alpha,
                    mean_reward: unperturbed,
                    ci_half_width: 0.0,
                    n: repeats,
                    insufficient_n: repeats < 2,
                });
            }
            let rewards: Vec<f64> = {
                (0..repeats)
                    .into_par_iter()
                    .map(|r| {
                        let noisy = perturb(params, alpha, perturbation_seed(seed, ai, r))?;
                        Ok(rollout_from(env, net, &noisy, start.clone())?.accumulated_reward)
                    })
                    .collect::<Result<_>>()?
            };
            let (mean, half) = mean_ci(&rewards);
            Ok(SweepPoint {
                alpha,
                mean_reward: mean,
                ci_half_width: half.unwrap_or(0.0),
                n: repeats,
                insufficient_n: half.is_none(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { points })
}

/// Pointwise mean curve and, with two or more trials, its 95% band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub mean: Vec<f64>,
    pub half_width: Option<Vec<f64>>,
    pub trials: usize,
}

pub fn aggregate_trials(curves: &[Vec<f64>]) -> Result<TrialAggregate> {
    let first = curves.first().ok_or_else(|| Error::contract("no trials to aggregate"))?;
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::contract("trial curves have different lengths"));
    }
    let mut mean = Vec::with_capacity(first.len());
    let mut half = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        let (m, h) = mean_ci(&column);
        mean.push(m);
        half.push(h.unwrap_or(0.0));
    }
    Ok(TrialAggregate { mean, half_width: (curves.len() >= 2).then_some(half), trials: curves.len() })
}
