//! Fixed off-policy training sets and the replay buffer used by the online
//! variant.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionId, EnvKind, Environment, StateVec, Transition};
use crate::error::{Error, Result};

/// How a dataset was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Cartesian,
    RandomPlay { seed: u64, episodes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub env: EnvKind,
    pub provenance: Provenance,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(env: EnvKind, provenance: Provenance, transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::contract("dataset must be non-empty"));
        }
        Ok(Dataset { env, provenance, transitions })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Splits the transition list into episodes. An episode ends at a
    /// terminal transition or wherever the next row does not continue from
    /// the previous next-state.
    pub fn episodes(&self) -> Vec<&[Transition]> {
        let mut out = Vec::new();
        let mut begin = 0;
        for i in 0..self.transitions.len() {
            let t = &self.transitions[i];
            let last = i + 1 == self.transitions.len();
            if last || t.next_is_terminal || self.transitions[i + 1].state != t.next_state {
                out.push(&self.transitions[begin..=i]);
                begin = i + 1;
            }
        }
        out
    }

    /// Writes the dataset as CSV: state components, action, next-state
    /// components, reward, terminal flag. Floats use the shortest
    /// representation that parses back to the same bits.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.save_csv_tagged(path, None)
    }

    /// As [`Dataset::save_csv`], with a `# config-digest=` line after the
    /// header when `digest` is given.
    pub fn save_csv_tagged(&self, path: &Path, digest: Option<&str>) -> Result<()> {
        let mut file = BufWriter::new(File::create(path)?);
        let provenance = serde_json::to_string(&self.provenance)?;
        writeln!(file, "# env={} provenance={}", self.env, provenance)?;
        if let Some(d) = digest {
            writeln!(file, "# config-digest={d}")?;
        }
        let dim = self.transitions[0].state.dim();
        let mut writer = csv::Writer::from_writer(file);
        let mut header: Vec<String> = (0..dim).map(|i| format!("s{i}")).collect();
        header.push("action".into());
        header.extend((0..dim).map(|i| format!("next_s{i}")));
        header.push("reward".into());
        header.push("terminal".into());
        writer.write_record(&header)?;
        for t in &self.transitions {
            let mut row: Vec<String> = t.state.0.iter().map(f64::to_string).collect();
            row.push(t.action.0.to_string());
            row.extend(t.next_state.0.iter().map(f64::to_string));
            row.push(t.reward.to_string());
            row.push(u8::from(t.next_is_terminal).to_string());
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut reader = BufReader::new(File::open(path)?);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let meta = first
            .strip_prefix("# env=")
            .ok_or_else(|| Error::format("dataset csv", "missing `# env=` header line"))?;
        let (env, provenance) = meta
            .trim_end()
            .split_once(" provenance=")
            .ok_or_else(|| Error::format("dataset csv", "missing provenance"))?;
        let env: EnvKind = env.parse()?;
        let provenance: Provenance = serde_json::from_str(provenance)?;

        let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let width = csv.headers()?.len();
        if width < 5 || (width - 3) % 2 != 0 {
            return Err(Error::format("dataset csv", format!("unexpected column count {width}")));
        }
        let dim = (width - 3) / 2;
        let parse = |field: &str| -> Result<f64> {
            field.parse().map_err(|_| Error::format("dataset csv", format!("bad number `{field}`")))
        };
        let mut transitions = Vec::new();
        for record in csv.records() {
            let record = record?;
            let state = (0..dim).map(|i| parse(&record[i])).collect::<Result<Vec<_>>>()?;
            let action = record[dim]
                .parse()
                .map_err(|_| Error::format("dataset csv", "bad action"))?;
            let next = (0..dim).map(|i| parse(&record[dim + 1 + i])).collect::<Result<Vec<_>>>()?;
            let reward = parse(&record[2 * dim + 1])?;
            let next_is_terminal = match &record[2 * dim + 2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::format("dataset csv", format!("bad terminal flag `{other}`"))),
            };
            transitions.push(Transition {
                state: StateVec(state),
                action: ActionId(action),
                next_state: StateVec(next),
                reward,
                next_is_terminal,
            });
        }
        Dataset::new(env, provenance, transitions)
    }
}

/// One transition for every (non-terminal state, action) pair of a grid.
pub fn build_grid_cartesian(env: &Environment) -> Result<Dataset> {
    let grid = env
        .grid()
        .ok_or_else(|| Error::config(format!("cartesian dataset needs a grid world, got {}", env.kind())))?;
    let mut transitions = Vec::new();
    for s in grid.layout.non_terminal_states() {
        for a in 0..env.num_actions() {
            let out = grid.step_index(s, ActionId(a))?;
            transitions.push(Transition {
                state: grid.encode(s),
                action: ActionId(a),
                next_state: grid.encode(out.next_index),
                reward: out.reward,
                next_is_terminal: out.terminal,
            });
        }
    }
    Dataset::new(env.kind(), Provenance::Cartesian, transitions)
}

/// Concatenated transitions of `episodes` uniformly random episodes.
/// Episodes stop at a terminal state or at the environment's step cap; a
/// capped final transition is not marked terminal.
pub fn sample_random_play(env: &Environment, seed: u64, episodes: usize) -> Result<Dataset> {
    if episodes == 0 {
        return Err(Error::contract("random play needs at least one episode"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = env.spec().max_episode_steps;
    let mut transitions = Vec::new();
    for _ in 0..episodes {
        let mut state = env.reset(rng.gen());
        for _ in 0..cap {
            let action = ActionId(rng.gen_range(0..env.num_actions()));
            let out = env.step(&state, action)?;
            let terminal = out.terminal;
            transitions.push(Transition {
                state,
                action,
                next_state: out.next.clone(),
                reward: out.reward,
                next_is_terminal: terminal,
            });
            if terminal {
                break;
            }
            state = out.next;
        }
    }
    Dataset::new(env.kind(), Provenance::RandomPlay { seed, episodes }, transitions)
}

/// Bounded FIFO of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    contents: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay buffer capacity must be positive"));
        }
        Ok(ReplayBuffer { capacity, contents: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.contents.len() == self.capacity {
            self.contents.pop_front();
        }
        self.contents.push_back(transition);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.contents.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.contents.is_empty() {
            return Err(Error::contract("cannot sample from an empty replay buffer"));
        }
        Ok((0..batch_size)
            .map(|_| self.contents[rng.gen_range(0..self.contents.len())].clone())
            .collect())
    }
}
