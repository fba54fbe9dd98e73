use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{classic_reward, EnvSpec, StateVec, Step};

const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

/// Mountain Car with three actions (push left, no push, push right).
/// State is `[position, velocity]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MountainCar {
    pub spec: EnvSpec,
}

impl MountainCar {
    pub fn new(spec: EnvSpec) -> Self {
        MountainCar { spec }
    }

    pub(super) fn reset(&self, rng: &mut ChaCha8Rng) -> StateVec {
        StateVec(vec![rng.gen_range(-0.6..-0.4), 0.0])
    }

    pub(super) fn is_terminal(&self, s: &[f64]) -> bool {
        s[0] >= GOAL_POSITION && s[1] >= 0.0
    }

    pub(super) fn step(&self, s: &[f64], action: usize) -> Step {
        let (mut position, mut velocity) = (s[0], s[1]);
        velocity += (action as f64 - 1.0) * FORCE + (3.0 * position).cos() * (-GRAVITY);
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        position += velocity;
        position = position.clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        let next = vec![position, velocity];
        let terminal = self.is_terminal(&next);
        Step { next: StateVec(next), reward: classic_reward(&self.spec, terminal), terminal }
    }
}
