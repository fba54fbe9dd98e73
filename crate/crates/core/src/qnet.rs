//! Fully connected ReLU Q-network with one output per action.
//!
//! Parameters live outside the network in a flat [`ParamVec`]. The layout is
//! layer by layer, input side first; within a layer the weight matrix comes
//! first in row-major `[out][in]` order, followed by the bias vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::env::{ActionId, StateVec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl NetShape {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        NetShape { input_dim, hidden_dims: hidden_dims.to_vec(), output_dim }
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.widths().contains(&0) {
            return Err(Error::config(format!("all layer widths must be positive: {:?}", self.widths())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVec(pub Vec<f64>);

impl ParamVec {
    pub fn zeros(len: usize) -> Self {
        ParamVec(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input of every layer; `inputs[0]` is the state.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

impl Trace {
    /// Smallest |pre-activation| over all hidden units. Finite-difference
    /// checks want this well away from zero.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.pre.iter().flatten().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    shape: NetShape,
    layers: Vec<Layer>,
    num_params: usize,
}

impl QNetwork {
    pub fn new(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        for pair in shape.widths().windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            layers.push(Layer { fan_in, fan_out, weights: offset, bias: offset + fan_in * fan_out });
            offset += fan_in * fan_out + fan_out;
        }
        Ok(QNetwork { shape, layers, num_params: offset })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_actions(&self) -> usize {
        self.shape.output_dim
    }

    /// Weights uniform in `±sqrt(1/fan_in)`, biases zero.
    pub fn init(&self, seed: u64) -> ParamVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamVec::zeros(self.num_params);
        for layer in &self.layers {
            let bound = (1.0 / layer.fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for w in &mut params.0[layer.weights..layer.bias] {
                *w = dist.sample(&mut rng);
            }
        }
        params
    }

    fn check(&self, params: &ParamVec, state: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::Dimension { expected: self.num_params, got: params.len() });
        }
        if state.len() != self.shape.input_dim {
            return Err(Error::Dimension { expected: self.shape.input_dim, got: state.len() });
        }
        Ok(())
    }

    /// Q-values of every action.
    pub fn forward(&self, params: &ParamVec, state: &StateVec) -> Result<Vec<f64>> {
        Ok(self.trace(params, state.as_slice())?.q)
    }

    pub fn trace(&self, params: &ParamVec, state: &[f64]) -> Result<Trace> {
        self.check(params, state)?;
        let p = params.as_slice();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut x = state.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let w = &p[layer.weights..layer.bias];
            let b = &p[layer.bias..layer.bias + layer.fan_out];
            let z: Vec<f64> = (0..layer.fan_out)
                .map(|j| {
                    let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                    b[j] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let input = std::mem::take(&mut x);
            inputs.push(input);
            if k + 1 == self.layers.len() {
                x = z;
            } else {
                x = z.iter().map(|v| v.max(0.0)).collect();
                pre.push(z);
            }
        }
        Ok(Trace { inputs, pre, q: x })
    }

    /// Adds `sum_a upstream[a] * dQ(s, a)/dtheta` into `grad`.
    pub fn backward(&self, params: &ParamVec, trace: &Trace, upstream: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.shape.output_dim);
        debug_assert_eq!(grad.len(), self.num_params);
        let p = params.as_slice();
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = self.layers[k];
            let x = &trace.inputs[k];
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[layer.weights + j * layer.fan_in..layer.weights + (j + 1) * layer.fan_in];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grad[layer.bias + j] += d;
            }
            if k == 0 {
                break;
            }
            let w = &p[layer.weights..layer.bias];
            let z = &trace.pre[k - 1];
            let mut prev = vec![0.0; layer.fan_in];
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                for (acc, &wji) in prev.iter_mut().zip(row) {
                    *acc += wji * d;
                }
            }
            for (acc, &zi) in prev.iter_mut().zip(z) {
                if zi <= 0.0 {
                    *acc = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// `upstream * dQ(state, action)/dtheta`.
    pub fn backward_selected(
        &self,
        params: &ParamVec,
        state: &StateVec,
        action: ActionId,
        upstream: f64,
    ) -> Result<ParamVec> {
        if action.0 >= self.shape.output_dim {
            return Err(Error::contract(format!("action {} out of range", action.0)));
        }
        let trace = self.trace(params, state.as_slice())?;
        let mut seed = vec![0.0; self.shape.output_dim];
        seed[action.0] = upstream;
        let mut grad = ParamVec::zeros(self.num_params);
        self.backward(params, &trace, &seed, &mut grad.0);
        Ok(grad)
    }

    /// `max_a Q(state, a)`.
    pub fn state_value(&self, params: &ParamVec, state: &StateVec) -> Result<f64> {
        Ok(max_value(&self.forward(params, state)?))
    }
}

/// Lowest-index maximizer.
pub fn argmax(values: &[f64]) -> ActionId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    ActionId(best)
}

pub fn max_value(values: &[f64]) -> f64 {
    values[argmax(values).0]
}

/// `theta + alpha * N(0, 1)` coordinate-wise. `alpha = 0` returns the
/// input unchanged.
pub fn perturb(params: &ParamVec, alpha: f64, seed: u64) -> Result<ParamVec> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::contract(format!("perturbation scale must be finite and >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(params.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ParamVec(
        params
            .0
            .iter()
            .map(|&theta| {
                let g: f64 = StandardNormal.sample(&mut rng);
                theta + alpha * g
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    fn tiny() -> QNetwork {
        QNetwork::new(NetShape::new(3, &[5, 4], 2)).unwrap()
    }

    #[test]
    fn layout_and_param_count() {
        let net = tiny();
        assert_eq!(net.num_params(), 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(net.shape().num_params(), net.num_params());
        assert!(QNetwork::new(NetShape::new(3, &[0], 2)).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = tiny();
        let q = net.forward(&ParamVec::zeros(net.num_params()), &StateVec(vec![0.3, -2.0, 7.0])).unwrap();
        assert_eq!(q, vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = tiny();
        let params = net.init(0);
        assert!(matches!(net.forward(&params, &StateVec(vec![1.0])), Err(Error::Dimension { .. })));
        assert!(net.forward(&ParamVec::zeros(3), &StateVec(vec![0.0; 3])).is_err());
        assert!(net.backward_selected(&params, &StateVec(vec![0.0; 3]), ActionId(2), 1.0).is_err());
    }

    #[test]
    fn scaling_the_last_layer_scales_outputs() {
        let net = tiny();
        let params = net.init(4);
        let state = StateVec(vec![0.5, -0.1, 0.9]);
        let q = net.forward(&params, &state).unwrap();
        let last = net.layers.last().unwrap();
        let mut scaled = params.clone();
        for v in &mut scaled.0[last.weights..] {
            *v *= 2.5;
        }
        let q2 = net.forward(&scaled, &state).unwrap();
        for (a, b) in q.iter().zip(&q2) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
        assert_eq!(argmax(&q), argmax(&q2));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let net = QNetwork::new(NetShape::new(16, &[64, 64], 4)).unwrap();
        assert_eq!(net.init(1), net.init(1));
        assert_ne!(net.init(1), net.init(2));
        let params = net.init(1);
        assert!(params.max_abs() <= 0.25);
        let last = net.layers.last().unwrap();
        assert!(params.0[last.bias..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_output_scale_is_order_one() {
        let net = QNetwork::new(NetShape::new(4, &[64, 64], 2)).unwrap();
        let params = net.init(9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            s.iter_mut().for_each(|v| *v /= norm);
            let q = net.forward(&params, &StateVec(s)).unwrap();
            assert!(q.iter().all(|v| v.abs() < 10.0));
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let net = tiny();
        let h = 1e-5;
        let mut checked = 0;
        for seed in 0..40u64 {
            let params = net.init(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let state = StateVec((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let trace = net.trace(&params, state.as_slice()).unwrap();
            if trace.min_abs_preactivation() < 1e-3 {
                continue;
            }
            for a in 0..2 {
                let g = net.backward_selected(&params, &state, ActionId(a), 1.0).unwrap();
                for j in 0..net.num_params() {
                    let mut plus = params.clone();
                    plus.0[j] += h;
                    let mut minus = params.clone();
                    minus.0[j] -= h;
                    let fd = (net.forward(&plus, &state).unwrap()[a] - net.forward(&minus, &state).unwrap()[a]) / (2.0 * h);
                    let scale = fd.abs().max(g.0[j].abs()).max(1e-3);
                    assert!((fd - g.0[j]).abs() / scale < 1e-4, "param {j}: fd {fd} vs {}", g.0[j]);
                }
            }
            checked += 1;
        }
        assert!(checked >= 10);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = tiny();
        let g = net.backward_selected(&net.init(1), &StateVec(vec![1.0, 2.0, 3.0]), ActionId(1), 0.0).unwrap();
        assert!(g.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 2.0, 0.0]), ActionId(1));
        assert_eq!(argmax(&[0.5; 4]), ActionId(0));
        assert_eq!(argmax(&[2.0, 5.0, 5.0]), ActionId(1));
    }

    #[test]
    fn perturbation_contract() {
        let params = tiny().init(3);
        assert_eq!(perturb(&params, 0.0, 1).unwrap(), params);
        assert_eq!(perturb(&params, 0.1, 1).unwrap(), perturb(&params, 0.1, 1).unwrap());
        assert_ne!(perturb(&params, 0.1, 1).unwrap(), perturb(&params, 0.1, 2).unwrap());
        assert!(matches!(perturb(&params, -0.1, 1), Err(Error::Contract(_))));
        assert!(perturb(&params, f64::NAN, 1).is_err());
    }

    #[test]
    fn perturbation_noise_has_unit_variance() {
        let n = 200_000;
        let params = ParamVec(vec![0.25; n]);
        let alpha = 0.3;
        let noisy = perturb(&params, alpha, 42).unwrap();
        let g: Vec<f64> = noisy.0.iter().zip(&params.0).map(|(a, b)| (a - b) / alpha).collect();
        let mean = g.iter().sum::<f64>() / n as f64;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    proptest! {
        #[test]
        fn backward_is_linear_in_upstream(seed in 0u64..1000, u1 in -3.0f64..3.0, u2 in -3.0f64..3.0) {
            let net = tiny();
            let params = net.init(seed);
            let s = StateVec(vec![0.2, -0.7, 1.1]);
            let g1 = net.backward_selected(&params, &s, ActionId(0), u1).unwrap();
            let g2 = net.backward_selected(&params, &s, ActionId(0), u2).unwrap();
            let g12 = net.backward_selected(&params, &s, ActionId(0), u1 + u2).unwrap();
            for j in 0..g12.len() {
                prop_assert!((g1.0[j] + g2.0[j] - g12.0[j]).abs() <= 1e-12 * (1.0 + g12.0[j].abs()));
            }
        }

        #[test]
        fn argmax_is_shift_invariant(values in proptest::collection::vec(-100i32..100, 1..6), c in -50i32..50) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let shifted: Vec<f64> = values.iter().map(|v| v + f64::from(c)).collect();
            prop_assert_eq!(argmax(&values), argmax(&shifted));
        }
    }
}
