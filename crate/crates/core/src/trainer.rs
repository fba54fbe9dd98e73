//! Training loops: full-batch offline training on a fixed dataset, the
//! online epsilon-greedy variant with experience replay, and continuation
//! from a checkpoint under a different gradient mode.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{DatasetSource, ExperimentConfig};
use crate::dataset::{Dataset, ReplayBuffer};
use crate::env::{ActionId, EnvKind, Environment, Transition};
use crate::error::{Error, Result};
use crate::evaluation::rollout_greedy;
use crate::gradients::{evaluate, GradientMode, IndexedBatch};
use crate::optimizer::{AdamState, Schedule};
use crate::qnet::{argmax, ParamVec, QNetwork};
use crate::regime::{analyze, RegimeReport, ValueDynamics};

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// `V(s)` for every grid state, in index order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_values: Option<Vec<f64>>,
    pub accumulated_reward: f64,
    pub regime: RegimeReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<LogRecord>,
}

impl RunLog {
    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    pub fn final_loss(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn losses(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.step, r.loss)).collect()
    }

    pub fn value_dynamics(&self) -> ValueDynamics {
        let mut dyns = ValueDynamics::default();
        for r in &self.records {
            if let Some(v) = &r.state_values {
                dyns.push(r.step, v);
            }
        }
        dyns
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<LogRecord>, _>>()?;
        Ok(RunLog { records })
    }
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamVec,
    pub adam: AdamState,
    pub log: RunLog,
    pub steps: usize,
    /// Size of the fixed dataset, or of the replay buffer at the end.
    pub dataset_size: usize,
}

impl TrainOutcome {
    pub fn final_report(&self) -> &RegimeReport {
        &self.log.last().expect("a run logs at least its final step").regime
    }

    pub fn checkpoint(&self, cfg: &ExperimentConfig, net: &QNetwork, mode: GradientMode) -> Checkpoint {
        Checkpoint {
            shape: net.shape().clone(),
            init_seed: cfg.network.init_seed,
            step: self.steps,
            mode,
            config_digest: cfg.digest(),
            params: self.params.clone(),
            adam: Some(self.adam.clone()),
        }
    }
}

/// Called with `(step, params, adam)` at the checkpoint cadence.
pub type CheckpointHook<'a> = dyn FnMut(usize, &ParamVec, &AdamState) -> Result<()> + 'a;

/// Fixed parts of a run.
pub struct RunSetup<'a> {
    pub env: &'a Environment,
    pub net: &'a QNetwork,
    pub mode: GradientMode,
    pub schedule: Schedule,
    pub steps: usize,
    pub log_every: usize,
    pub eval_seed: u64,
    pub regime_margin: Option<f64>,
    pub checkpoint_every: usize,
}

impl<'a> RunSetup<'a> {
    pub fn from_config(cfg: &ExperimentConfig, env: &'a Environment, net: &'a QNetwork) -> Self {
        RunSetup {
            env,
            net,
            mode: cfg.training.mode,
            schedule: cfg.optimizer,
            steps: cfg.training.steps,
            log_every: cfg.training.log_every,
            eval_seed: cfg.training.eval_seed,
            regime_margin: cfg.training.regime_margin,
            checkpoint_every: cfg.training.checkpoint_every,
        }
    }

    fn record(&self, step: usize, loss: f64, params: &ParamVec, analysis_rows: &[Transition]) -> Result<LogRecord> {
        let state_values = match self.env {
            Environment::Grid(g) => Some(
                (0..g.layout.num_states())
                    .map(|s| self.net.state_value(params, &g.encode(s)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let accumulated_reward = rollout_greedy(self.env, self.net, params, self.eval_seed)?.accumulated_reward;
        let regime = analyze(self.env, analysis_rows, self.net, params, self.regime_margin)?;
        Ok(LogRecord { step, loss, lr: self.schedule.lr_at(step), state_values, accumulated_reward, regime })
    }
}

fn check_loss(step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Err(Error::Divergence { step, loss });
    }
    Ok(())
}

/// `setup.steps` full-batch updates on `dataset` starting from `params`.
/// Record `k` describes the parameters after `k` updates.
pub fn train_on_dataset(
    setup: &RunSetup,
    dataset: &Dataset,
    mut params: ParamVec,
    mut adam: AdamState,
    mut hook: Option<&mut CheckpointHook>,
) -> Result<TrainOutcome> {
    if setup.steps == 0 {
        return Err(Error::config("training needs at least one step"));
    }
    if setup.log_every == 0 {
        return Err(Error::config("log cadence must be positive"));
    }
    if params.len() != setup.net.num_params() || adam.len() != params.len() {
        return Err(Error::Dimension { expected: setup.net.num_params(), got: params.len() });
    }
    let gamma = setup.env.gamma();
    let batch = IndexedBatch::new(&dataset.transitions)?;
    let mut log = RunLog::default();
    for step in 0..setup.steps {
        let (loss, grad) = evaluate(setup.mode, setup.net, &params, &batch, gamma, true)?;
        check_loss(step, loss)?;
        if step % setup.log_every == 0 {
            log.records.push(setup.record(step, loss, &params, &dataset.transitions)?);
        }
        let grad = grad.expect("gradient requested");
        adam.step(params.as_mut_slice(), grad.as_slice(), setup.schedule.lr_at(step))?;
        if let Some(h) = hook.as_mut() {
            if setup.checkpoint_every > 0 && (step + 1) % setup.checkpoint_every == 0 {
                h(step + 1, &params, &adam)?;
            }
        }
    }
    let (loss, _) = evaluate(setup.mode, setup.net, &params, &batch, gamma, false)?;
    check_loss(setup.steps, loss)?;
    log.records.push(setup.record(setup.steps, loss, &params, &dataset.transitions)?);
    Ok(TrainOutcome { params, adam: adam.clone(), log, steps: setup.steps, dataset_size: dataset.len() })
}

/// Full offline run described by `cfg`.
pub fn train_offline(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    train_offline_with(cfg, None)
}

pub fn train_offline_with(cfg: &ExperimentConfig, hook: Option<&mut CheckpointHook>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env = cfg.environment()?;
    let net = cfg.network(&env)?;
    let dataset = cfg.build_dataset(&env)?;
    let setup = RunSetup::from_config(cfg, &env, &net);
    let params = net.init(cfg.network.init_seed);
    let adam = AdamState::new(net.num_params());
    train_on_dataset(&setup, &dataset, params, adam, hook)
}

/// Resumes from `checkpoint` with a fresh optimizer and the schedule
/// restarted, training `steps` updates under `mode`. Zero steps returns the
/// checkpoint parameters untouched.
pub fn continue_training(
    checkpoint: &Checkpoint,
    cfg: &ExperimentConfig,
    mode: GradientMode,
    steps: usize,
) -> Result<TrainOutcome> {
    let env = cfg.environment()?;
    let net = cfg.network(&env)?;
    if checkpoint.shape != *net.shape() {
        return Err(Error::config(format!(
            "checkpoint shape {:?} does not match config shape {:?}",
            checkpoint.shape.widths(),
            net.shape().widths()
        )));
    }
    if checkpoint.params.len() != net.num_params() {
        return Err(Error::Dimension { expected: net.num_params(), got: checkpoint.params.len() });
    }
    let adam = AdamState::new(net.num_params());
    if steps == 0 {
        return Ok(TrainOutcome {
            params: checkpoint.params.clone(),
            adam,
            log: RunLog::default(),
            steps: 0,
            dataset_size: 0,
        });
    }
    let dataset = cfg.build_dataset(&env)?;
    let mut setup = RunSetup::from_config(cfg, &env, &net);
    setup.mode = mode;
    setup.steps = steps;
    train_on_dataset(&setup, &dataset, checkpoint.params.clone(), adam, None)
}

/// Epsilon-greedy behaviour policy.
pub fn behaviour_action<R: Rng>(
    net: &QNetwork,
    params: &ParamVec,
    state: &crate::env::StateVec,
    num_actions: usize,
    explore_rate: f64,
    rng: &mut R,
) -> Result<ActionId> {
    if rng.gen::<f64>() < explore_rate {
        Ok(ActionId(rng.gen_range(0..num_actions)))
    } else {
        Ok(argmax(&net.forward(params, state)?))
    }
}

/// Online variant: the environment is stepped alongside training, every
/// transition enters a replay buffer, and once the buffer holds a full
/// batch each environment step is followed by one mini-batch update.
/// Losses and regime reports are computed over the buffer contents;
/// accumulated reward comes from separate greedy evaluation rollouts.
pub fn train_online(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let DatasetSource::Online { buffer_capacity, batch_size, explore_rate, seed } = cfg.dataset else {
        return Err(Error::config("train_online needs an online dataset source"));
    };
    let env = cfg.environment()?;
    let net = cfg.network(&env)?;
    let setup = RunSetup::from_config(cfg, &env, &net);
    let gamma = env.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = ReplayBuffer::new(buffer_capacity)?;
    let mut params = net.init(cfg.network.init_seed);
    let mut adam = AdamState::new(net.num_params());
    let mut log = RunLog::default();
    let mut updates = 0usize;

    let mut state = env.reset(rng.gen());
    let mut episode_steps = 0;
    let buffer_rows = |buffer: &ReplayBuffer| buffer.iter().cloned().collect::<Vec<Transition>>();
    for step in 0..setup.steps {
        let action = behaviour_action(&net, &params, &state, env.num_actions(), explore_rate, &mut rng)?;
        let out = env.step(&state, action)?;
        episode_steps += 1;
        let terminal = out.terminal;
        buffer.push(Transition {
            state: state.clone(),
            action,
            next_state: out.next.clone(),
            reward: out.reward,
            next_is_terminal: terminal,
        });
        if terminal || episode_steps >= env.spec().max_episode_steps {
            state = env.reset(rng.gen());
            episode_steps = 0;
        } else {
            state = out.next;
        }

        if step % setup.log_every == 0 {
            let rows = buffer_rows(&buffer);
            let all = IndexedBatch::new(&rows)?;
            let (loss, _) = evaluate(setup.mode, &net, &params, &all, gamma, false)?;
            check_loss(step, loss)?;
            let mut rec = setup.record(step, loss, &params, &rows)?;
            rec.lr = setup.schedule.lr_at(updates);
            log.records.push(rec);
        }
        if buffer.len() >= batch_size {
            let batch = IndexedBatch::new(&buffer.sample(batch_size, &mut rng)?)?;
            let (loss, grad) = evaluate(setup.mode, &net, &params, &batch, gamma, true)?;
            check_loss(step, loss)?;
            adam.step(params.as_mut_slice(), grad.expect("gradient requested").as_slice(), setup.schedule.lr_at(updates))?;
            updates += 1;
        }
    }
    let rows = buffer_rows(&buffer);
    let all = IndexedBatch::new(&rows)?;
    let (loss, _) = evaluate(setup.mode, &net, &params, &all, gamma, false)?;
    check_loss(setup.steps, loss)?;
    let mut rec = setup.record(setup.steps, loss, &params, &rows)?;
    rec.lr = setup.schedule.lr_at(updates);
    log.records.push(rec);
    Ok(TrainOutcome { params, adam, log, steps: setup.steps, dataset_size: buffer.len() })
}

/// Dispatches on the dataset source.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    if cfg.is_online() {
        train_online(cfg)
    } else {
        train_offline(cfg)
    }
}

/// Grid World state values of the final record, if any.
pub fn final_state_values(log: &RunLog) -> Option<&[f64]> {
    log.last()?.state_values.as_deref()
}

/// Fraction of non-terminal grid states whose greedy action is one of the
/// optimal actions of `optimal`.
pub fn policy_agreement(
    env: &Environment,
    net: &QNetwork,
    params: &ParamVec,
    optimal: &crate::oracle::TabularQ,
) -> Result<f64> {
    let grid = env
        .grid()
        .ok_or_else(|| Error::config(format!("policy agreement needs a grid world, got {}", env.kind())))?;
    let states = grid.layout.non_terminal_states();
    let mut agree = 0;
    for &s in &states {
        let action = argmax(&net.forward(params, &grid.encode(s))?);
        if optimal.optimal_actions(s, 1e-9)?.contains(&action) {
            agree += 1;
        }
    }
    Ok(agree as f64 / states.len() as f64)
}

/// Writes `records` lines to any writer; used by the CLI for streaming.
pub fn write_records(out: &mut impl Write, log: &RunLog) -> Result<()> {
    for r in &log.records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[allow(dead_code)]
fn is_grid(env: &Environment) -> bool {
    env.kind() == EnvKind::GridWorld
}
