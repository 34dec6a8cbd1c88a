//! Cart-pole balancing (Barto, Sutton & Anderson, 1983) with cart-track and
//! pole-pivot friction, integrated with explicit Euler steps.
//!
//! State `[x, x_dot, theta, theta_dot]`; action 0 pushes left, 1 pushes
//! right with a fixed-magnitude force. Reward +1 per step, the terminating
//! step included.
//!
//! The single `friction` parameter is the cart-track coefficient; the
//! pole-pivot coefficient follows it at a fixed ratio, so `friction = 0`
//! reproduces the frictionless gym dynamics exactly.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::EnvParams;

pub const GRAVITY: f64 = 9.8;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const X_THRESHOLD: f64 = 2.4;
pub const THETA_THRESHOLD: f64 = 15.0 * 2.0 * PI / 360.0;
/// Pole-pivot friction relative to cart friction (Barto et al. used
/// 0.000002 against 0.0005).
pub const POLE_FRICTION_RATIO: f64 = 0.004;

#[derive(Debug, Clone)]
pub struct CartPole {
    pub masspole: f64,
    /// Half the pole length.
    pub lengthpole: f64,
    pub masscart: f64,
    pub friction: f64,
    pub(super) state: [f64; 4],
}

impl CartPole {
    pub fn new(params: &EnvParams) -> Self {
        Self {
            masspole: params.value("masspole"),
            lengthpole: params.value("lengthpole"),
            masscart: params.value("masscart"),
            friction: params.value("friction"),
            state: [0.0; 4],
        }
    }

    pub(super) fn reset(&mut self, rng: &mut ChaCha8Rng) {
        for v in &mut self.state {
            *v = rng.gen_range(-0.05..=0.05);
        }
    }

    pub(super) fn step(&mut self, action: usize) -> (f64, bool) {
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let (mp, l) = (self.masspole, self.lengthpole);
        let total = self.masscart + mp;
        let mu_c = self.friction;
        let mu_p = self.friction * POLE_FRICTION_RATIO;
        let (sin, cos) = (theta.sin(), theta.cos());
        let sgn = signum0(x_dot);

        let num = GRAVITY * sin
            + cos * ((-force - mp * l * theta_dot * theta_dot * sin + mu_c * sgn) / total)
            - mu_p * theta_dot / (mp * l);
        let theta_acc = num / (l * (4.0 / 3.0 - mp * cos * cos / total));
        let x_acc =
            (force + mp * l * (theta_dot * theta_dot * sin - theta_acc * cos) - mu_c * sgn) / total;

        let x = x + TAU * x_dot;
        let x_dot = x_dot + TAU * x_acc;
        let theta = theta + TAU * theta_dot;
        let theta_dot = theta_dot + TAU * theta_acc;
        self.state = [x, x_dot, theta, theta_dot];

        let terminated = x.abs() > X_THRESHOLD || theta.abs() > THETA_THRESHOLD;
        (1.0, terminated)
    }

    pub(super) fn observe(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}

/// Sign with `signum0(0) == 0`.
fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
