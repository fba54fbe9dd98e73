//! Deterministic environments: a tabular Grid World and three classic-control
//! tasks (Cart Pole, Mountain Car, Acrobot) with the reward structure used
//! throughout the experiments.
//!
//! Every environment is a pure value transformer. `step` never mutates the
//! environment and two calls with the same arguments return bitwise-equal
//! results.

mod acrobot;
mod cartpole;
mod grid;
mod mountain_car;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use grid::{grid_step, GridAction, GridLayout, GridStep, GridWorld};
pub use mountain_car::MountainCar;

/// An environment state as fed to the Q-network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub Vec<f64>);

impl StateVec {
    pub fn one_hot(index: usize, dim: usize) -> Self {
        let mut values = vec![0.0; dim];
        values[index] = 1.0;
        StateVec(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Bit pattern of the components, used as an exact identity key.
    pub fn bits(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

/// One experience tuple `(s, a, s', r)` plus whether `s'` is terminal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateVec,
    pub action: ActionId,
    pub next_state: StateVec,
    pub reward: f64,
    pub next_is_terminal: bool,
}

/// Result of a single environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next: StateVec,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    GridWorld,
    CartPole,
    MountainCar,
    Acrobot,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [
        EnvKind::GridWorld,
        EnvKind::CartPole,
        EnvKind::MountainCar,
        EnvKind::Acrobot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::GridWorld => "grid-world",
            EnvKind::CartPole => "cart-pole",
            EnvKind::MountainCar => "mountain-car",
            EnvKind::Acrobot => "acrobot",
        }
    }

    /// Goal-seeking tasks want to reach a terminal state; Cart Pole wants
    /// to avoid one.
    pub fn regime_kind(self) -> RegimeKind {
        match self {
            EnvKind::CartPole => RegimeKind::Survival,
            _ => RegimeKind::GoalSeeking,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "gridworld" | "grid" => Ok(EnvKind::GridWorld),
            "cartpole" => Ok(EnvKind::CartPole),
            "mountaincar" => Ok(EnvKind::MountainCar),
            "acrobot" => Ok(EnvKind::Acrobot),
            _ => Err(Error::config(format!("unknown environment `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    GoalSeeking,
    Survival,
}

/// Reward received when entering a terminal state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReward {
    Uniform(f64),
    GoalTrap { goal: f64, trap: f64 },
}

/// Discount, rewards and episode cap of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub gamma: f64,
    pub step_reward: f64,
    pub terminal_reward: TerminalReward,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn default_for(kind: EnvKind) -> Self {
        let (gamma, step_reward, terminal_reward, max_episode_steps) = match kind {
            EnvKind::GridWorld => (
                0.95,
                -0.01,
                TerminalReward::GoalTrap { goal: 1.0, trap: -1.0 },
                100,
            ),
            EnvKind::CartPole => (0.87, 1.0, TerminalReward::Uniform(-5.0), 200),
            EnvKind::MountainCar => (0.93, -1.0, TerminalReward::Uniform(1.0), 500),
            EnvKind::Acrobot => (0.98, -1.0, TerminalReward::Uniform(0.0), 500),
        };
        EnvSpec { kind, gamma, step_reward, terminal_reward, max_episode_steps }
    }

    pub fn regime_kind(&self) -> RegimeKind {
        self.kind.regime_kind()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::config("max_episode_steps must be positive"));
        }
        Ok(())
    }

    fn uniform_terminal_reward(&self) -> f64 {
        match self.terminal_reward {
            TerminalReward::Uniform(r) => r,
            TerminalReward::GoalTrap { goal, .. } => goal,
        }
    }
}

/// Any of the four supported environments.
#[derive(Clone, Debug, PartialEq)]
pub enum Environment {
    Grid(GridWorld),
    CartPole(CartPole),
    MountainCar(MountainCar),
    Acrobot(Acrobot),
}

impl Environment {
    /// Environment with its default spec (and the default Grid World layout).
    pub fn new(kind: EnvKind) -> Self {
        Self::from_spec(EnvSpec::default_for(kind), None).expect("default spec is valid")
    }

    pub fn from_spec(spec: EnvSpec, layout: Option<GridLayout>) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.kind {
            EnvKind::GridWorld => {
                Environment::Grid(GridWorld::new(layout.unwrap_or_default(), spec)?)
            }
            EnvKind::CartPole => Environment::CartPole(CartPole::new(spec)),
            EnvKind::MountainCar => Environment::MountainCar(MountainCar::new(spec)),
            EnvKind::Acrobot => Environment::Acrobot(Acrobot::new(spec)),
        })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Environment::Grid(e) => &e.spec,
            Environment::CartPole(e) => &e.spec,
            Environment::MountainCar(e) => &e.spec,
            Environment::Acrobot(e) => &e.spec,
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.spec().kind
    }

    pub fn gamma(&self) -> f64 {
        self.spec().gamma
    }

    pub fn grid(&self) -> Option<&GridWorld> {
        match self {
            Environment::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Environment::Grid(_) => 4,
            Environment::CartPole(_) => 2,
            Environment::MountainCar(_) => 3,
            Environment::Acrobot(_) => 3,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Environment::Grid(g) => g.layout.num_states(),
            Environment::CartPole(_) => 4,
            Environment::MountainCar(_) => 2,
            Environment::Acrobot(_) => 4,
        }
    }

    /// Initial state of an episode. Grid World ignores the seed.
    pub fn reset(&self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Environment::Grid(g) => g.encode(g.layout.start),
            Environment::CartPole(e) => e.reset(&mut rng),
            Environment::MountainCar(e) => e.reset(&mut rng),
            Environment::Acrobot(e) => e.reset(&mut rng),
        }
    }

    pub fn is_terminal(&self, state: &StateVec) -> Result<bool> {
        self.check_dim(state)?;
        Ok(match self {
            Environment::Grid(g) => g.layout.is_terminal(g.decode(state)?),
            Environment::CartPole(e) => e.is_terminal(state.as_slice()),
            Environment::MountainCar(e) => e.is_terminal(state.as_slice()),
            Environment::Acrobot(e) => e.is_terminal(state.as_slice()),
        })
    }

    /// Deterministic transition `f(s, a)` with its reward.
    pub fn step(&self, state: &StateVec, action: ActionId) -> Result<Step> {
        self.check_dim(state)?;
        if action.0 >= self.num_actions() {
            return Err(Error::contract(format!(
                "action {} out of range for {} ({} actions)",
                action.0,
                self.kind(),
                self.num_actions()
            )));
        }
        if self.is_terminal(state)? {
            return Err(Error::contract(format!("{} stepped from a terminal state", self.kind())));
        }
        match self {
            Environment::Grid(g) => {
                let out = grid_step(&g.layout, &g.spec, g.decode(state)?, action)?;
                Ok(Step { next: g.encode(out.next_index), reward: out.reward, terminal: out.terminal })
            }
            Environment::CartPole(e) => Ok(e.step(state.as_slice(), action.0)),
            Environment::MountainCar(e) => Ok(e.step(state.as_slice(), action.0)),
            Environment::Acrobot(e) => Ok(e.step(state.as_slice(), action.0)),
        }
    }

    fn check_dim(&self, state: &StateVec) -> Result<()> {
        if state.dim() != self.state_dim() {
            return Err(Error::Dimension { expected: self.state_dim(), got: state.dim() });
        }
        Ok(())
    }
}

/// Reward for a classic-control step given whether the next state is terminal.
fn classic_reward(spec: &EnvSpec, terminal: bool) -> f64 {
    if terminal {
        spec.uniform_terminal_reward()
    } else {
        spec.step_reward
    }
}
