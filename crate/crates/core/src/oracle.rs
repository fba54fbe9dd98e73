//! Exact tabular ground truth for Grid World.

use serde::{Deserialize, Serialize};

use crate::env::{grid_step, ActionId, EnvSpec, GridAction, GridLayout, TerminalReward};
use crate::error::{Error, Result};
use crate::qnet::{argmax, NetShape, ParamVec, QNetwork};
use crate::regime::regime_threshold;

const NUM_ACTIONS: usize = 4;

/// State-action values indexed by grid state. Terminal states carry a row
/// too; its max is read as the terminal state's value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    pub rows: Vec<Option<[f64; NUM_ACTIONS]>>,
}

impl TabularQ {
    pub fn empty(num_states: usize) -> Self {
        TabularQ { rows: vec![None; num_states] }
    }

    pub fn row(&self, state: usize) -> Result<&[f64; NUM_ACTIONS]> {
        self.rows
            .get(state)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::contract(format!("table has no entry for state {state}")))
    }

    pub fn value(&self, state: usize) -> Result<f64> {
        let row = self.row(state)?;
        Ok(row[argmax(row).0])
    }

    pub fn greedy(&self, state: usize) -> Result<ActionId> {
        Ok(argmax(self.row(state)?))
    }

    /// Every action within `tol` of the row maximum.
    pub fn optimal_actions(&self, state: usize, tol: f64) -> Result<Vec<ActionId>> {
        let row = self.row(state)?;
        let best = row[argmax(row).0];
        Ok((0..NUM_ACTIONS).filter(|&a| row[a] >= best - tol).map(ActionId).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalSolution {
    pub q: TabularQ,
    /// Greedy action per state; `None` on terminal states.
    pub policy: Vec<Option<ActionId>>,
    /// Sup-norm change of each sweep.
    pub sweep_deltas: Vec<f64>,
}

impl OptimalSolution {
    pub fn start_value(&self, layout: &GridLayout) -> f64 {
        self.q.value(layout.start).expect("start state is non-terminal")
    }
}

fn check_grid(layout: &GridLayout) -> Result<()> {
    layout.validate()
}

/// Synchronous value iteration with terminal values pinned at zero.
pub fn value_iteration(layout: &GridLayout, spec: &EnvSpec, tol: f64) -> Result<OptimalSolution> {
    check_grid(layout)?;
    if !(tol > 0.0) {
        return Err(Error::contract("tolerance must be positive"));
    }
    let n = layout.num_states();
    let mut q = vec![[0.0; NUM_ACTIONS]; n];
    let mut sweep_deltas = Vec::new();
    loop {
        let values: Vec<f64> = (0..n)
            .map(|s| if layout.is_terminal(s) { 0.0 } else { q[s][argmax(&q[s]).0] })
            .collect();
        let mut delta: f64 = 0.0;
        let mut next = q.clone();
        for s in layout.non_terminal_states() {
            for a in 0..NUM_ACTIONS {
                let out = grid_step(layout, spec, s, ActionId(a))?;
                let target = out.reward + spec.gamma * if out.terminal { 0.0 } else { values[out.next_index] };
                delta = delta.max((target - q[s][a]).abs());
                next[s][a] = target;
            }
        }
        q = next;
        sweep_deltas.push(delta);
        if delta < tol {
            break;
        }
        if sweep_deltas.len() > 1_000_000 {
            return Err(Error::contract("value iteration did not converge"));
        }
    }
    let q = TabularQ { rows: q.into_iter().map(Some).collect() };
    let policy = (0..n)
        .map(|s| (!layout.is_terminal(s)).then(|| q.greedy(s).expect("complete table")))
        .collect();
    Ok(OptimalSolution { q, policy, sweep_deltas })
}

/// Mean squared Bellman residual of a table over the Cartesian dataset,
/// bootstrapping through terminal rows exactly as the network does.
pub fn exact_residual(table: &TabularQ, layout: &GridLayout, spec: &EnvSpec) -> Result<f64> {
    check_grid(layout)?;
    if table.rows.len() != layout.num_states() {
        return Err(Error::Dimension { expected: layout.num_states(), got: table.rows.len() });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for s in layout.non_terminal_states() {
        for a in 0..NUM_ACTIONS {
            let out = grid_step(layout, spec, s, ActionId(a))?;
            let residual = table.row(s)?[a] - out.reward - spec.gamma * table.value(out.next_index)?;
            total += residual * residual;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// A zero-residual table in the bad regime: every non-terminal entry equals
/// `r_s / (1 - gamma)` and each terminal entry solves
/// `r_T + gamma V_T = r_s / (1 - gamma)`. Its greedy policy is decided by
/// tie-breaking alone.
pub fn bad_regime_certificate(layout: &GridLayout, spec: &EnvSpec) -> Result<TabularQ> {
    check_grid(layout)?;
    if spec.gamma <= 0.0 {
        return Err(Error::contract("certificate needs gamma > 0"));
    }
    let fixed = regime_threshold(spec.step_reward, spec.gamma)?;
    let (goal_reward, trap_reward) = match spec.terminal_reward {
        TerminalReward::GoalTrap { goal, trap } => (goal, trap),
        TerminalReward::Uniform(r) => (r, r),
    };
    let rows = (0..layout.num_states())
        .map(|s| {
            let v = if s == layout.goal {
                (fixed - goal_reward) / spec.gamma
            } else if layout.is_trap(s) {
                (fixed - trap_reward) / spec.gamma
            } else {
                fixed
            };
            Some([v; NUM_ACTIONS])
        })
        .collect();
    Ok(TabularQ { rows })
}

/// Outcome of following a table's greedy policy from the start state.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRollout {
    pub path: Vec<usize>,
    pub reward: f64,
    pub reached_goal: bool,
}

pub fn table_rollout(table: &TabularQ, layout: &GridLayout, spec: &EnvSpec) -> Result<TableRollout> {
    let mut s = layout.start;
    let mut path = vec![s];
    let mut reward = 0.0;
    for _ in 0..spec.max_episode_steps {
        let out = grid_step(layout, spec, s, table.greedy(s)?)?;
        reward += out.reward;
        s = out.next_index;
        path.push(s);
        if out.terminal {
            break;
        }
    }
    Ok(TableRollout { path, reward, reached_goal: s == layout.goal })
}

/// Length of the shortest start-to-goal path avoiding traps (BFS).
pub fn shortest_path_length(layout: &GridLayout) -> Option<usize> {
    let spec = EnvSpec::default_for(crate::env::EnvKind::GridWorld);
    let mut dist = vec![usize::MAX; layout.num_states()];
    let mut queue = std::collections::VecDeque::from([layout.start]);
    dist[layout.start] = 0;
    while let Some(s) = queue.pop_front() {
        if s == layout.goal {
            return Some(dist[s]);
        }
        if layout.is_terminal(s) {
            continue;
        }
        for a in GridAction::ALL {
            let next = grid_step(layout, &spec, s, a.id()).ok()?.next_index;
            if dist[next] == usize::MAX {
                dist[next] = dist[s] + 1;
                queue.push_back(next);
            }
        }
    }
    None
}

/// A network with one-hot input and no hidden layer whose output weights
/// are `table`; missing rows become zeros. Lets network-level tooling audit
/// a table.
pub fn tabular_network(table: &TabularQ) -> Result<(QNetwork, ParamVec)> {
    let n = table.rows.len();
    let net = QNetwork::new(NetShape::new(n, &[], NUM_ACTIONS))?;
    let mut params = ParamVec::zeros(net.num_params());
    for (s, row) in table.rows.iter().enumerate() {
        if let Some(row) = row {
            for (a, &q) in row.iter().enumerate() {
                params.0[a * n + s] = q;
            }
        }
    }
    Ok((net, params))
}
