//! Bellman residual loss and its three gradient estimators.
//!
//! For a batch of transitions the residual is
//! `delta_i = Q(s_i, a_i) - r_i - gamma * max_a' Q(s'_i, a')` and the loss is
//! the mean of `delta_i^2`. The bootstrap term is always evaluated by the
//! network, terminal next-states included.
//!
//! * `Semi` (TD) differentiates only the prediction `Q(s_i, a_i)`.
//! * `True` (residual gradient) differentiates the whole residual, with the
//!   max treated through its maximizing branch.
//! * `BackwardSemi` is `True - Semi`: the bootstrap side alone.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{ActionId, StateVec, Transition};
use crate::error::{Error, Result};
use crate::qnet::{argmax, ParamVec, QNetwork, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    Semi,
    True,
    BackwardSemi,
}

impl GradientMode {
    pub const ALL: [GradientMode; 3] = [GradientMode::Semi, GradientMode::True, GradientMode::BackwardSemi];

    pub fn name(self) -> &'static str {
        match self {
            GradientMode::Semi => "semi",
            GradientMode::True => "true",
            GradientMode::BackwardSemi => "backward-semi",
        }
    }

    fn uses_prediction(self) -> bool {
        matches!(self, GradientMode::Semi | GradientMode::True)
    }

    fn uses_bootstrap(self) -> bool {
        matches!(self, GradientMode::True | GradientMode::BackwardSemi)
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "semi" | "td" => Ok(GradientMode::Semi),
            "true" | "rg" => Ok(GradientMode::True),
            "backward-semi" | "backwardsemi" => Ok(GradientMode::BackwardSemi),
            _ => Err(Error::config(format!("unknown gradient mode `{s}` (semi | true | backward-semi)"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Row {
    state: usize,
    action: usize,
    next: usize,
    reward: f64,
}

/// A batch with its distinct states pulled out, so each state is pushed
/// through the network once per evaluation no matter how often it occurs.
#[derive(Clone, Debug)]
pub struct IndexedBatch {
    states: Vec<StateVec>,
    rows: Vec<Row>,
}

impl IndexedBatch {
    pub fn new(batch: &[Transition]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::contract("batch must be non-empty"));
        }
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut states = Vec::new();
        let mut intern = |s: &StateVec| {
            *index.entry(s.bits()).or_insert_with(|| {
                states.push(s.clone());
                states.len() - 1
            })
        };
        let rows = batch
            .iter()
            .map(|t| Row {
                state: intern(&t.state),
                action: t.action.0,
                next: intern(&t.next_state),
                reward: t.reward,
            })
            .collect();
        Ok(IndexedBatch { states, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn distinct_states(&self) -> usize {
        self.states.len()
    }
}

/// Loss, and when requested the gradient of the given mode.
pub fn evaluate(
    mode: GradientMode,
    net: &QNetwork,
    params: &ParamVec,
    batch: &IndexedBatch,
    gamma: f64,
    with_grad: bool,
) -> Result<(f64, Option<ParamVec>)> {
    let traces = batch
        .states
        .iter()
        .map(|s| net.trace(params, s.as_slice()))
        .collect::<Result<Vec<Trace>>>()?;
    for row in &batch.rows {
        if row.action >= net.num_actions() {
            return Err(Error::contract(format!("action {} out of range", row.action)));
        }
    }
    let n = batch.rows.len() as f64;
    let greedy: Vec<usize> = traces.iter().map(|t| argmax(&t.q).0).collect();

    let mut loss = 0.0;
    let mut upstream = if with_grad { vec![vec![0.0; net.num_actions()]; traces.len()] } else { Vec::new() };
    for row in &batch.rows {
        let next_best = greedy[row.next];
        let residual = traces[row.state].q[row.action] - row.reward - gamma * traces[row.next].q[next_best];
        loss += residual * residual;
        if with_grad {
            let coeff = 2.0 * residual / n;
            if mode.uses_prediction() {
                upstream[row.state][row.action] += coeff;
            }
            if mode.uses_bootstrap() {
                upstream[row.next][next_best] -= gamma * coeff;
            }
        }
    }
    loss /= n;

    let grad = with_grad.then(|| {
        let mut grad = ParamVec::zeros(net.num_params());
        for (trace, up) in traces.iter().zip(&upstream) {
            if up.iter().any(|&u| u != 0.0) {
                net.backward(params, trace, up, &mut grad.0);
            }
        }
        grad
    });
    Ok((loss, grad))
}

/// Mean squared Bellman residual.
pub fn bellman_loss(net: &QNetwork, params: &ParamVec, batch: &[Transition], gamma: f64) -> Result<f64> {
    let batch = IndexedBatch::new(batch)?;
    Ok(evaluate(GradientMode::True, net, params, &batch, gamma, false)?.0)
}

pub fn grad(
    mode: GradientMode,
    net: &QNetwork,
    params: &ParamVec,
    batch: &[Transition],
    gamma: f64,
) -> Result<ParamVec> {
    let batch = IndexedBatch::new(batch)?;
    Ok(evaluate(mode, net, params, &batch, gamma, true)?.1.expect("gradient requested"))
}

/// Per-transition residuals in batch order.
pub fn residuals(net: &QNetwork, params: &ParamVec, batch: &[Transition], gamma: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            let q = net.forward(params, &t.state)?;
            let q_next = net.forward(params, &t.next_state)?;
            let a = t.action.0;
            if a >= q.len() {
                return Err(Error::contract(format!("action {a} out of range")));
            }
            Ok(q[a] - t.reward - gamma * q_next[argmax(&q_next).0])
        })
        .collect()
}

pub fn greedy_action(net: &QNetwork, params: &ParamVec, state: &StateVec) -> Result<ActionId> {
    Ok(argmax(&net.forward(params, state)?))
}

/// Central-difference gradient of [`bellman_loss`], one parameter at a time.
pub fn fd_gradient(net: &QNetwork, params: &ParamVec, batch: &[Transition], gamma: f64, h: f64) -> Result<ParamVec> {
    if !(h > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let indexed = IndexedBatch::new(batch)?;
    let loss = |p: &ParamVec| evaluate(GradientMode::True, net, p, &indexed, gamma, false).map(|r| r.0);
    let mut out = ParamVec::zeros(params.len());
    let mut probe = params.clone();
    for j in 0..params.len() {
        let orig = probe.0[j];
        probe.0[j] = orig + h;
        let plus = loss(&probe)?;
        probe.0[j] = orig - h;
        let minus = loss(&probe)?;
        probe.0[j] = orig;
        out.0[j] = (plus - minus) / (2.0 * h);
    }
    Ok(out)
}
