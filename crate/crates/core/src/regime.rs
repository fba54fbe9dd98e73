//! Policy-regime analysis.
//!
//! When the Bellman residual is small, values along a greedy path satisfy
//! `V(s) ~ r_s + gamma V(s')`, so `V(s) - t = gamma (V(s') - t)` with the
//! fixed point `t = r_s / (1 - gamma)`. States whose greedy path loops sit at
//! `t`; states that climb towards a goal sit above it. Goal-seeking tasks are
//! in the good regime when every non-terminal value is clearly above `t`.
//! Survival tasks (Cart Pole) want looping states near `t` and pre-terminal
//! states far below it.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::env::{EnvKind, Environment, RegimeKind, StateVec, Transition};
use crate::error::{Error, Result};
use crate::qnet::{argmax, ParamVec, QNetwork};

/// The fixed-point value `r_s / (1 - gamma)`.
pub fn regime_threshold(step_reward: f64, gamma: f64) -> Result<f64> {
    if !(gamma < 1.0) {
        return Err(Error::contract(format!("gamma must be < 1, got {gamma}")));
    }
    Ok(step_reward / (1.0 - gamma))
}

/// `0.05 |threshold| + 0.01`.
pub fn default_margin(threshold: f64) -> f64 {
    0.05 * threshold.abs() + 0.01
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Good,
    Bad,
    Indeterminate,
}

/// Terminal, pre-terminal and other states of a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StatePartition {
    pub terminal: Vec<StateVec>,
    pub pre_terminal: Vec<StateVec>,
    pub other: Vec<StateVec>,
    /// States of rows that open an episode; empty for Grid World, whose
    /// start state comes from the layout.
    pub starts: Vec<StateVec>,
}

impl StatePartition {
    pub fn sizes(&self) -> [usize; 3] {
        [self.terminal.len(), self.pre_terminal.len(), self.other.len()]
    }
}

/// Partitions the states of `transitions`.
///
/// Grid World states are identified by exact vector equality. Continuous
/// states are taken per row: every row contributes its `state` to either the
/// pre-terminal or the other set, and every terminal row its `next_state` to
/// the terminal set. A state is pre-terminal when a row takes its greedy
/// action and lands in a terminal state.
pub fn partition_transitions(
    env: EnvKind,
    transitions: &[Transition],
    net: &QNetwork,
    params: &ParamVec,
) -> Result<StatePartition> {
    let mut greedy = HashMap::new();
    let mut greedy_of = |s: &StateVec| -> Result<usize> {
        if let Some(&a) = greedy.get(&s.bits()) {
            return Ok(a);
        }
        let a = argmax(&net.forward(params, s)?).0;
        greedy.insert(s.bits(), a);
        Ok(a)
    };
    let is_pre_terminal_row = |t: &Transition, greedy_action: usize| t.next_is_terminal && t.action.0 == greedy_action;

    let mut part = StatePartition::default();

    if env == EnvKind::GridWorld {
        let mut terminal: Vec<Vec<u64>> = Vec::new();
        let mut pre: HashSet<Vec<u64>> = HashSet::new();
        let mut seen: Vec<(Vec<u64>, StateVec)> = Vec::new();
        let mut seen_keys: HashSet<Vec<u64>> = HashSet::new();
        for t in transitions {
            for s in [&t.state, &t.next_state] {
                if seen_keys.insert(s.bits()) {
                    seen.push((s.bits(), s.clone()));
                }
            }
            if t.next_is_terminal && !terminal.contains(&t.next_state.bits()) {
                terminal.push(t.next_state.bits());
            }
            if is_pre_terminal_row(t, greedy_of(&t.state)?) {
                pre.insert(t.state.bits());
            }
        }
        for (key, s) in seen {
            if terminal.contains(&key) {
                part.terminal.push(s);
            } else if pre.contains(&key) {
                part.pre_terminal.push(s);
            } else {
                part.other.push(s);
            }
        }
    } else {
        for t in transitions {
            if t.next_is_terminal {
                part.terminal.push(t.next_state.clone());
            }
            if is_pre_terminal_row(t, greedy_of(&t.state)?) {
                part.pre_terminal.push(t.state.clone());
            } else {
                part.other.push(t.state.clone());
            }
        }
        part.starts = episode_starts(transitions).into_iter().map(|i| transitions[i].state.clone()).collect();
    }
    Ok(part)
}

pub fn partition_states(dataset: &Dataset, net: &QNetwork, params: &ParamVec) -> Result<StatePartition> {
    partition_transitions(dataset.env, &dataset.transitions, net, params)
}

/// Row indices that begin an episode: the first row and every row that does
/// not continue from its predecessor.
fn episode_starts(transitions: &[Transition]) -> Vec<usize> {
    (0..transitions.len())
        .filter(|&i| {
            i == 0 || transitions[i - 1].next_is_terminal || transitions[i - 1].next_state != transitions[i].state
        })
        .collect()
}

/// Means of `max_a Q` over each set; `None` for an empty set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionMeans {
    pub v_t: Option<f64>,
    pub v_pt: Option<f64>,
    pub v_o: Option<f64>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn state_values(states: &[StateVec], net: &QNetwork, params: &ParamVec) -> Result<Vec<f64>> {
    states.iter().map(|s| net.state_value(params, s)).collect()
}

pub fn mean_partition_values(part: &StatePartition, net: &QNetwork, params: &ParamVec) -> Result<PartitionMeans> {
    Ok(PartitionMeans {
        v_t: mean(&state_values(&part.terminal, net, params)?),
        v_pt: mean(&state_values(&part.pre_terminal, net, params)?),
        v_o: mean(&state_values(&part.other, net, params)?),
    })
}

/// Goal-seeking verdict over the values of every non-terminal, non-start
/// state. Good: all clear `threshold + margin`. Bad: some state sits within
/// the margin band around the threshold, the signature of a greedy loop.
pub fn classify_goal_seeking(values: &[f64], threshold: f64, margin: f64) -> Verdict {
    if values.is_empty() {
        return Verdict::Indeterminate;
    }
    if values.iter().all(|&v| v > threshold + margin) {
        Verdict::Good
    } else if values.iter().any(|&v| (v - threshold).abs() <= margin) {
        Verdict::Bad
    } else {
        Verdict::Indeterminate
    }
}

/// Survival verdict. Good: `V_pT` clearly below the threshold and `V_O` not
/// above it. Bad: `V_pT` at or above the threshold.
pub fn classify_survival(means: &PartitionMeans, threshold: f64, margin: f64) -> Verdict {
    let Some(v_pt) = means.v_pt else {
        return Verdict::Indeterminate;
    };
    if v_pt >= threshold {
        return Verdict::Bad;
    }
    match means.v_o {
        Some(v_o) if v_pt < threshold - margin && v_o <= threshold + margin => Verdict::Good,
        _ => Verdict::Indeterminate,
    }
}

pub fn classify(kind: RegimeKind, values: &[f64], means: &PartitionMeans, threshold: f64, margin: f64) -> Verdict {
    match kind {
        RegimeKind::GoalSeeking => classify_goal_seeking(values, threshold, margin),
        RegimeKind::Survival => classify_survival(means, threshold, margin),
    }
}

/// Per-episode count of terminating episodes whose final pre-terminal and
/// terminal state values exceed the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeCounts {
    pub terminated_episodes: usize,
    pub pre_terminal_above: usize,
    pub terminal_above: usize,
}

pub fn episode_threshold_counts(
    transitions: &[Transition],
    net: &QNetwork,
    params: &ParamVec,
    threshold: f64,
) -> Result<EpisodeCounts> {
    let mut counts = EpisodeCounts { terminated_episodes: 0, pre_terminal_above: 0, terminal_above: 0 };
    for t in transitions.iter().filter(|t| t.next_is_terminal) {
        counts.terminated_episodes += 1;
        if net.state_value(params, &t.state)? > threshold {
            counts.pre_terminal_above += 1;
        }
        if net.state_value(params, &t.next_state)? > threshold {
            counts.terminal_above += 1;
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub env: EnvKind,
    pub kind: RegimeKind,
    pub threshold: f64,
    pub margin: f64,
    pub v_t: Option<f64>,
    pub v_pt: Option<f64>,
    pub v_o: Option<f64>,
    /// `[|S_T|, |S_pT|, |S_O|]`.
    pub set_sizes: [usize; 3],
    /// Smallest value among non-terminal, non-start states.
    pub min_nonterminal_value: Option<f64>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_counts: Option<EpisodeCounts>,
}

/// Full report for a network over a set of transitions.
pub fn analyze(
    env: &Environment,
    transitions: &[Transition],
    net: &QNetwork,
    params: &ParamVec,
    margin: Option<f64>,
) -> Result<RegimeReport> {
    if transitions.is_empty() {
        return Err(Error::contract("regime analysis needs a non-empty dataset"));
    }
    let spec = env.spec();
    let threshold = regime_threshold(spec.step_reward, spec.gamma)?;
    let margin = margin.unwrap_or_else(|| default_margin(threshold));
    let part = partition_transitions(spec.kind, transitions, net, params)?;
    let means = mean_partition_values(&part, net, params)?;

    let nonterminal: Vec<StateVec> = if let Some(grid) = env.grid() {
        let start = grid.encode(grid.layout.start).bits();
        part.pre_terminal.iter().chain(&part.other).filter(|s| s.bits() != start).cloned().collect()
    } else {
        // Per-row identity: drop the rows that open an episode.
        let start_rows: HashSet<usize> = episode_starts(transitions).into_iter().collect();
        transitions
            .iter()
            .enumerate()
            .filter(|(i, _)| !start_rows.contains(i))
            .map(|(_, t)| t.state.clone())
            .collect()
    };
    let values = state_values(&nonterminal, net, params)?;
    let verdict = classify(spec.regime_kind(), &values, &means, threshold, margin);
    let episode_counts = match spec.regime_kind() {
        RegimeKind::Survival => Some(episode_threshold_counts(transitions, net, params, threshold)?),
        RegimeKind::GoalSeeking => None,
    };
    Ok(RegimeReport {
        env: spec.kind,
        kind: spec.regime_kind(),
        threshold,
        margin,
        v_t: means.v_t,
        v_pt: means.v_pt,
        v_o: means.v_o,
        set_sizes: part.sizes(),
        min_nonterminal_value: values.iter().copied().reduce(f64::min),
        verdict,
        episode_counts,
    })
}

/// Per-state `V(s)` time series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueDynamics {
    pub steps: Vec<usize>,
    /// `series[k][i]` is the value of tracked state `k` at `steps[i]`.
    pub series: Vec<Vec<f64>>,
}

impl ValueDynamics {
    pub fn push(&mut self, step: usize, values: &[f64]) {
        if self.series.is_empty() {
            self.series = vec![Vec::new(); values.len()];
        }
        self.steps.push(step);
        for (track, &v) in self.series.iter_mut().zip(values) {
            track.push(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_grid_cartesian, Provenance};
    use crate::env::ActionId;
    use crate::qnet::NetShape;

    #[test]
    fn reference_thresholds() {
        assert!((regime_threshold(-0.01, 0.95).unwrap() + 0.2).abs() < 1e-12);
        assert!((regime_threshold(1.0, 0.87).unwrap() - 7.692307692307692).abs() < 1e-12);
        assert_eq!(regime_threshold(0.0, 0.3).unwrap(), 0.0);
        assert!((regime_threshold(-0.01, 0.85).unwrap() + 0.0666666666666).abs() < 1e-10);
        assert!(regime_threshold(1.0, 1.0).is_err());
    }

    #[test]
    fn goal_seeking_verdicts() {
        let t = -0.2;
        let m = default_margin(t);
        assert_eq!(classify_goal_seeking(&[-0.2, -0.199, -0.21, -0.19], t, m), Verdict::Bad);
        assert_eq!(classify_goal_seeking(&[0.1, 0.4, 0.01], t, m), Verdict::Good);
        assert_eq!(classify_goal_seeking(&[0.1, -0.5], t, m), Verdict::Indeterminate);
        assert_eq!(classify_goal_seeking(&[0.1, -0.195], t, m), Verdict::Bad);
        assert_eq!(classify_goal_seeking(&[], t, m), Verdict::Indeterminate);
    }

    #[test]
    fn survival_verdicts() {
        let t = regime_threshold(1.0, 0.87).unwrap();
        let m = default_margin(t);
        let good = PartitionMeans { v_t: Some(-35.0), v_pt: Some(-30.0), v_o: Some(7.0) };
        assert_eq!(classify_survival(&good, t, m), Verdict::Good);
        let bad = PartitionMeans { v_t: Some(9.0), v_pt: Some(8.1), v_o: Some(7.6) };
        assert_eq!(classify_survival(&bad, t, m), Verdict::Bad);
        let unclear = PartitionMeans { v_t: None, v_pt: Some(7.5), v_o: Some(7.6) };
        assert_eq!(classify_survival(&unclear, t, m), Verdict::Indeterminate);
        assert_eq!(classify_survival(&PartitionMeans::default(), t, m), Verdict::Indeterminate);
    }

    #[test]
    fn verdict_ignores_order() {
        let mut v = vec![0.3, -0.2, 0.5, -0.19];
        let a = classify_goal_seeking(&v, -0.2, 0.02);
        v.reverse();
        assert_eq!(a, classify_goal_seeking(&v, -0.2, 0.02));
    }

    #[test]
    fn default_grid_partition() {
        let env = Environment::new(EnvKind::GridWorld);
        let data = build_grid_cartesian(&env).unwrap();
        let net = QNetwork::new(NetShape::new(16, &[8], 4)).unwrap();
        let params = net.init(0);
        let part = partition_states(&data, &net, &params).unwrap();
        assert_eq!(part.terminal.len(), 4);
        assert_eq!(part.sizes().iter().sum::<usize>(), 16);
        let mut all: Vec<Vec<u64>> =
            part.terminal.iter().chain(&part.pre_terminal).chain(&part.other).map(StateVec::bits).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 16);
        assert!(part.starts.is_empty());
    }

    #[test]
    fn no_terminal_rows_means_empty_terminal_sets() {
        let rows: Vec<Transition> = (0..5)
            .map(|i| Transition {
                state: StateVec(vec![i as f64, 0.0]),
                action: ActionId(0),
                next_state: StateVec(vec![i as f64 + 1.0, 0.0]),
                reward: -1.0,
                next_is_terminal: false,
            })
            .collect();
        let data = Dataset::new(EnvKind::MountainCar, Provenance::RandomPlay { seed: 0, episodes: 1 }, rows).unwrap();
        let net = QNetwork::new(NetShape::new(2, &[4], 3)).unwrap();
        let part = partition_states(&data, &net, &net.init(1)).unwrap();
        assert!(part.terminal.is_empty() && part.pre_terminal.is_empty());
        assert_eq!(part.other.len(), 5);
        assert_eq!(part.starts.len(), 1);
    }

    #[test]
    fn zero_network_means_are_zero() {
        let env = Environment::new(EnvKind::GridWorld);
        let data = build_grid_cartesian(&env).unwrap();
        let net = QNetwork::new(NetShape::new(16, &[8], 4)).unwrap();
        let zero = ParamVec::zeros(net.num_params());
        let part = partition_states(&data, &net, &zero).unwrap();
        let means = mean_partition_values(&part, &net, &zero).unwrap();
        assert_eq!(means.v_t, Some(0.0));
        assert_eq!(means.v_o, Some(0.0));
        // Under ties the greedy action is Up; 7 -> 3, 10 -> 6 and 13 -> 9 are pre-terminal.
        assert_eq!(means.v_pt, Some(0.0));
        assert_eq!(part.pre_terminal.len(), 3);
    }

    #[test]
    fn singleton_set_mean_is_its_value() {
        let net = QNetwork::new(NetShape::new(2, &[3], 2)).unwrap();
        let params = net.init(2);
        let s = StateVec(vec![0.3, -0.4]);
        let part = StatePartition { terminal: vec![s.clone()], ..Default::default() };
        let means = mean_partition_values(&part, &net, &params).unwrap();
        assert_eq!(means.v_t, Some(net.state_value(&params, &s).unwrap()));
        assert_eq!(means.v_o, None);
    }

    #[test]
    fn cart_pole_report_has_episode_counts() {
        let env = Environment::new(EnvKind::CartPole);
        let data = crate::dataset::sample_random_play(&env, 100, 10).unwrap();
        let net = QNetwork::new(NetShape::new(4, &[8], 2)).unwrap();
        let report = analyze(&env, &data.transitions, &net, &net.init(0), None).unwrap();
        assert_eq!(report.kind, RegimeKind::Survival);
        assert_eq!(report.episode_counts.unwrap().terminated_episodes, 10);
        assert_eq!(report.set_sizes[0], 10);
        assert_eq!(report.set_sizes[1] + report.set_sizes[2], data.len());
        let json = serde_json::to_string(&report).unwrap();
        let back: RegimeReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
