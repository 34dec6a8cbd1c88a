//! Mountain car (Moore, 1990): an under-powered car in a valley must rock
//! back and forth to reach the flag on the right hill.
//!
//! State `[position, velocity]`; actions 0 = push left, 1 = no push,
//! 2 = push right. Reward is -1 on every step, the goal step included.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::EnvParams;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct MountainCar {
    pub force: f64,
    pub gravity: f64,
    pub goal_velocity: f64,
    pub(super) state: [f64; 2],
}

impl MountainCar {
    pub fn new(params: &EnvParams) -> Self {
        Self {
            force: params.value("force"),
            gravity: params.value("gravity"),
            goal_velocity: params.value("goal_velocity"),
            state: [0.0; 2],
        }
    }

    pub(super) fn reset(&mut self, rng: &mut ChaCha8Rng) {
        self.state = [rng.gen_range(-0.6..=-0.4), 0.0];
    }

    pub(super) fn step(&mut self, action: usize) -> (f64, bool) {
        let [mut position, mut velocity] = self.state;
        velocity += (action as f64 - 1.0) * self.force + (3.0 * position).cos() * (-self.gravity);
        velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
        position += velocity;
        position = position.clamp(MIN_POSITION, MAX_POSITION);
        if position == MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        self.state = [position, velocity];
        let terminated = position >= GOAL_POSITION && velocity >= self.goal_velocity;
        (-1.0, terminated)
    }

    pub(super) fn observe(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}
