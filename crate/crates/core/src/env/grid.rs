use serde::{Deserialize, Serialize};

use super::{ActionId, EnvKind, EnvSpec, StateVec, TerminalReward};
use crate::error::{Error, Result};

/// Geometry of a rectangular grid with row-major state indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub start: usize,
    pub goal: usize,
    pub traps: Vec<usize>,
}

impl Default for GridLayout {
    /// ```text
    ///  0  1  2  G
    ///  4  T  T  7
    ///  8  T 10 11
    ///  S 13 14 15
    /// ```
    fn default() -> Self {
        GridLayout { rows: 4, cols: 4, start: 12, goal: 3, traps: vec![5, 6, 9] }
    }
}

impl GridLayout {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config("grid must have at least one row and column"));
        }
        let n = self.num_states();
        if self.start >= n || self.goal >= n || self.traps.iter().any(|&t| t >= n) {
            return Err(Error::config("grid start, goal and traps must lie inside the grid"));
        }
        if self.traps.contains(&self.goal) {
            return Err(Error::config("goal cannot also be a trap"));
        }
        if self.is_terminal(self.start) {
            return Err(Error::config("start state cannot be terminal"));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_trap(&self, index: usize) -> bool {
        self.traps.contains(&index)
    }

    pub fn is_terminal(&self, index: usize) -> bool {
        index == self.goal || self.is_trap(index)
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| self.is_terminal(s)).collect()
    }

    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| !self.is_terminal(s)).collect()
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];

    pub fn id(self) -> ActionId {
        ActionId(self as usize)
    }

    pub fn from_id(action: ActionId) -> Result<Self> {
        Self::ALL
            .get(action.0)
            .copied()
            .ok_or_else(|| Error::contract(format!("grid action {} out of range", action.0)))
    }

    pub fn arrow(self) -> char {
        match self {
            GridAction::Up => '^',
            GridAction::Down => 'v',
            GridAction::Left => '<',
            GridAction::Right => '>',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridStep {
    pub next_index: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// Moves one cell. Bumping into the boundary leaves the agent in place.
pub fn grid_step(layout: &GridLayout, spec: &EnvSpec, index: usize, action: ActionId) -> Result<GridStep> {
    if index >= layout.num_states() {
        return Err(Error::contract(format!("state {index} outside the grid")));
    }
    if layout.is_terminal(index) {
        return Err(Error::contract(format!("state {index} is terminal")));
    }
    let (row, col) = layout.row_col(index);
    let (row, col) = match GridAction::from_id(action)? {
        GridAction::Up => (row.saturating_sub(1), col),
        GridAction::Down => ((row + 1).min(layout.rows - 1), col),
        GridAction::Left => (row, col.saturating_sub(1)),
        GridAction::Right => (row, (col + 1).min(layout.cols - 1)),
    };
    let next_index = row * layout.cols + col;
    let (goal_reward, trap_reward) = match spec.terminal_reward {
        TerminalReward::GoalTrap { goal, trap } => (goal, trap),
        TerminalReward::Uniform(r) => (r, r),
    };
    let (reward, terminal) = if next_index == layout.goal {
        (goal_reward, true)
    } else if layout.is_trap(next_index) {
        (trap_reward, true)
    } else {
        (spec.step_reward, false)
    };
    Ok(GridStep { next_index, reward, terminal })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    pub layout: GridLayout,
    pub spec: EnvSpec,
}

impl GridWorld {
    pub fn new(layout: GridLayout, spec: EnvSpec) -> Result<Self> {
        layout.validate()?;
        if spec.kind != EnvKind::GridWorld {
            return Err(Error::config(format!("grid world built with a {} spec", spec.kind)));
        }
        Ok(GridWorld { layout, spec })
    }

    pub fn encode(&self, index: usize) -> StateVec {
        StateVec::one_hot(index, self.layout.num_states())
    }

    /// Recovers the state index from a one-hot encoding.
    pub fn decode(&self, state: &StateVec) -> Result<usize> {
        let n = self.layout.num_states();
        if state.dim() != n {
            return Err(Error::Dimension { expected: n, got: state.dim() });
        }
        let mut hot = None;
        for (i, &v) in state.as_slice().iter().enumerate() {
            if v == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if v != 0.0 {
                return Err(Error::contract("grid state is not a one-hot vector"));
            }
        }
        hot.ok_or_else(|| Error::contract("grid state is not a one-hot vector"))
    }

    pub fn step_index(&self, index: usize, action: ActionId) -> Result<GridStep> {
        grid_step(&self.layout, &self.spec, index, action)
    }
}
