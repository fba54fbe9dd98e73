use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{classic_reward, EnvSpec, StateVec, Step};

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_LIMIT: f64 = 2.4;

/// Cart Pole with explicit Euler integration. State is
/// `[x, x_dot, theta, theta_dot]`; action 0 pushes left, 1 pushes right.
#[derive(Clone, Debug, PartialEq)]
pub struct CartPole {
    pub spec: EnvSpec,
}

impl CartPole {
    pub fn new(spec: EnvSpec) -> Self {
        CartPole { spec }
    }

    pub(super) fn reset(&self, rng: &mut ChaCha8Rng) -> StateVec {
        StateVec((0..4).map(|_| rng.gen_range(-0.05..0.05)).collect())
    }

    pub(super) fn is_terminal(&self, s: &[f64]) -> bool {
        !(-X_LIMIT..=X_LIMIT).contains(&s[0]) || !(-THETA_LIMIT..=THETA_LIMIT).contains(&s[2])
    }

    pub(super) fn step(&self, s: &[f64], action: usize) -> Step {
        let [x, x_dot, theta, theta_dot] = [s[0], s[1], s[2], s[3]];
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;

        let next = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        let terminal = self.is_terminal(&next);
        Step { next: StateVec(next.to_vec()), reward: classic_reward(&self.spec, terminal), terminal }
    }
}

#[cfg(test)]
mod tests {
    use crate::env::{ActionId, EnvKind, Environment, StateVec};

    #[test]
    fn upright_rest_state_survives_with_plus_one() {
        let env = Environment::new(EnvKind::CartPole);
        for a in 0..2 {
            let out = env.step(&StateVec(vec![0.0; 4]), ActionId(a)).unwrap();
            assert!(!out.terminal);
            assert_eq!(out.reward, 1.0);
        }
    }

    #[test]
    fn pushes_move_the_cart_in_opposite_directions() {
        let env = Environment::new(EnvKind::CartPole);
        let rest = StateVec(vec![0.0; 4]);
        let left = env.step(&rest, ActionId(0)).unwrap().next;
        let right = env.step(&rest, ActionId(1)).unwrap().next;
        assert!(left.0[1] < 0.0 && right.0[1] > 0.0);
        assert_eq!(left.0[1], -right.0[1]);
    }

    #[test]
    fn falling_pole_terminates_with_minus_five() {
        let env = Environment::new(EnvKind::CartPole);
        let mut s = StateVec(vec![0.0, 0.0, 0.2, 1.0]);
        let out = env.step(&s, ActionId(0)).unwrap();
        assert!(out.terminal);
        assert_eq!(out.reward, -5.0);
        s.0[2] = 0.3;
        assert!(env.step(&s, ActionId(0)).is_err());
    }
}
