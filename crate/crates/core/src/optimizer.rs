//! Adam with a step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `lr(t) = lr0 * decay^floor(t / period)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr0: f64,
    pub decay: f64,
    pub period: usize,
}

impl Schedule {
    pub fn new(lr0: f64, decay: f64, period: usize) -> Result<Self> {
        let s = Schedule { lr0, decay, period };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(lr0: f64) -> Self {
        Schedule { lr0, decay: 1.0, period: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config(format!("initial learning rate must be positive, got {}", self.lr0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if self.period == 0 {
            return Err(Error::config("decay period must be positive"));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let k = (step / self.period) as i32;
        self.lr0 * self.decay.powi(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension { expected: self.m.len(), got: params.len().max(grad.len()) });
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn grid_schedule_values() {
        let s = Schedule::new(1e-4, 0.85, 3000).unwrap();
        assert_eq!(s.lr_at(0), 1e-4);
        assert_eq!(s.lr_at(2999), 1e-4);
        assert!((s.lr_at(3000) - 8.5e-5).abs() < 1e-18);
        assert!((s.lr_at(6000) - 7.225e-5).abs() < 1e-18);
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(0.0, 0.5, 10).is_err());
        assert!(Schedule::new(1e-3, 1.5, 10).is_err());
        assert!(Schedule::new(1e-3, 0.5, 0).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3], 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.7, -0.02, 1e-3] {
            let mut adam = AdamState::new(1);
            let mut p = vec![0.0];
            adam.step(&mut p, &[g], 0.01).unwrap();
            // m_hat = g, v_hat = g^2: update is lr * g / (|g| + eps).
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-6 * 0.01);
            assert!((p[0] + 0.01 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = AdamState::new(2);
        assert!(adam.step(&mut [0.0; 3], &[0.0; 3], 0.1).is_err());
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let run = || {
            let mut adam = AdamState::new(4);
            let mut p = vec![0.1, 0.2, 0.3, 0.4];
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| (x * (k as f64 + 1.0)).sin()).collect();
                adam.step(&mut p, &g, 1e-2).unwrap();
            }
            p.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn lr_is_non_increasing(lr0 in 1e-7f64..1.0, decay in 0.01f64..=1.0, period in 1usize..5000, step in 0usize..100_000) {
            let s = Schedule::new(lr0, decay, period).unwrap();
            prop_assert!(s.lr_at(step + 1) <= s.lr_at(step));
        }

        #[test]
        fn update_is_bounded_by_lr(grads in proptest::collection::vec(-100.0f64..100.0, 1..40)) {
            // Worst case for arbitrary sequences is lr * (1 - beta1) / sqrt(1 - beta2) ~ 3.16 lr.
            let mut adam = AdamState::new(1);
            let mut p = vec![0.0];
            let lr = 1e-3;
            for g in grads {
                let before = p[0];
                adam.step(&mut p, &[g], lr).unwrap();
                prop_assert!((p[0] - before).abs() <= lr * 3.17);
            }
        }

        #[test]
        fn steady_gradients_move_at_most_lr(g in -100.0f64..100.0, steps in 1usize..200) {
            let mut adam = AdamState::new(1);
            let mut p = vec![0.0];
            let lr = 1e-3;
            for _ in 0..steps {
                let before = p[0];
                adam.step(&mut p, &[g], lr).unwrap();
                prop_assert!((p[0] - before).abs() <= lr * (1.0 + 1e-9));
            }
        }
    }
}
